#pragma once

#include <cstdio>
#include <fstream>
#include <map>

#include "memreasoner/core.hpp"
#include "memreasoner/tape.hpp"

namespace memr {

// Named learnable tensors plus their gradient and Adam state. Values are kept
// float32-representable at all times so checkpoints round-trip bit-exactly.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;
  };

  int add(const std::string& name, Mat init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    round_f32_inplace(init);
    Entry e;
    e.name = name;
    e.grad = Mat(init.rows, init.cols);
    e.adam_m = Mat(init.rows, init.cols);
    e.adam_v = Mat(init.rows, init.cols);
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    index_[name] = static_cast<int>(entries_.size()) - 1;
    return index_[name];
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  int idx(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }
  Entry& entry(int i) { return entries_[i]; }
  const Entry& entry(int i) const { return entries_[i]; }
  Mat& value(const std::string& name) { return entries_[idx(name)].value; }
  const Mat& value(const std::string& name) const { return entries_[idx(name)].value; }
  Mat& grad(const std::string& name) { return entries_[idx(name)].grad; }
  int count() const { return static_cast<int>(entries_.size()); }

  void zero_grad() {
    for (auto& e : entries_)
      for (double& x : e.grad.data) x = 0.0;
  }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
};

// Binds parameters into one tape as gradient-tracking inputs, one node per
// parameter per tape, and scatters adjoints back after backward().
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParamStore& store, bool track_grad = true)
      : tape_(&tape), store_(&store), track_(track_grad),
        vars_(store.count(), -1) {}

  Var operator()(const std::string& name) { return get(store_->idx(name)); }

  Var get(int idx) {
    if (vars_[idx] < 0) vars_[idx] = tape_->input(store_->entry(idx).value, track_);
    return vars_[idx];
  }

  // Adds tape adjoints into the store's gradient buffers, scaled.
  void accumulate_grads(double scale = 1.0) {
    for (size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i] < 0) continue;
      const Mat& g = tape_->grad(vars_[i]);
      if (g.empty()) continue;
      Mat& dst = store_->entry(static_cast<int>(i)).grad;
      for (size_t k = 0; k < g.data.size(); ++k) dst.data[k] += scale * g.data[k];
    }
  }

 private:
  Tape* tape_;
  ParamStore* store_;
  bool track_;
  std::vector<Var> vars_;
};

// Checkpoint wire format:
//   magic "MRCK" | version u32 | tensor count u32 |
//   per tensor: name_len u16 | name bytes | rank u8 | dims u32[rank] | data f32[] (LE)
//   trailing: blob_len u32 | UTF-8 JSON config blob
struct Checkpoint {
  struct NamedTensor {
    std::string name;
    Mat value;
  };
  std::vector<NamedTensor> tensors;
  std::string config_json;

  static constexpr uint32_t kVersion = 1;

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write("MRCK", 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
      if (t.name.size() > 0xffff) throw std::runtime_error("tensor name too long");
      uint16_t len = static_cast<uint16_t>(t.name.size());
      out.write(reinterpret_cast<const char*>(&len), 2);
      out.write(t.name.data(), len);
      uint8_t rank = 2;
      out.write(reinterpret_cast<const char*>(&rank), 1);
      write_u32(out, static_cast<uint32_t>(t.value.rows));
      write_u32(out, static_cast<uint32_t>(t.value.cols));
      for (double x : t.value.data) {
        float f = static_cast<float>(x);
        out.write(reinterpret_cast<const char*>(&f), 4);
      }
    }
    write_u32(out, static_cast<uint32_t>(config_json.size()));
    out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "MRCK")
      throw std::runtime_error("not a checkpoint file: " + path);
    uint32_t version = read_u32(in);
    if (version != kVersion)
      throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    uint32_t count = read_u32(in);
    Checkpoint ck;
    ck.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
      uint16_t len = 0;
      in.read(reinterpret_cast<char*>(&len), 2);
      std::string name(len, '\0');
      in.read(name.data(), len);
      uint8_t rank = 0;
      in.read(reinterpret_cast<char*>(&rank), 1);
      std::vector<uint32_t> dims(rank);
      for (auto& d : dims) d = read_u32(in);
      int rows = rank >= 1 ? static_cast<int>(dims[0]) : 1;
      int cols = 1;
      for (size_t k = 1; k < dims.size(); ++k) cols *= static_cast<int>(dims[k]);
      Mat m(rows, cols);
      for (double& x : m.data) {
        float f = 0.0f;
        in.read(reinterpret_cast<char*>(&f), 4);
        x = static_cast<double>(f);
      }
      if (!in) throw std::runtime_error("truncated checkpoint: " + path);
      ck.tensors.push_back({std::move(name), std::move(m)});
    }
    uint32_t blob = read_u32(in);
    ck.config_json.resize(blob);
    in.read(ck.config_json.data(), blob);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    return ck;
  }

 private:
  static void write_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  static uint32_t read_u32(std::ifstream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  }
};

}  // namespace memr
