#pragma once

#include "memreasoner/memory.hpp"
#include "memreasoner/params.hpp"
#include "memreasoner/taskgen.hpp"
#include "memreasoner/temporal.hpp"
#include "memreasoner/vocab.hpp"

namespace memr {

struct ModelConfig {
  int dim = 64;        // latent dimension D
  int enc_dim = 64;    // encoder width
  int dec_dim = 64;    // decoder width
  int dec_layers = 2;
  int heads = 2;
  int ff_dim = 128;
  int slots = 512;     // memory rows m
  int max_pos = 96;
  std::string temporal = "gru";  // gru | sinusoidal
  double lambda = kDefaultRidgeLambda;
  uint64_t init_seed = 1234;
};

struct Model {
  ModelConfig cfg;
  Vocab vocab;
  ParamStore params;

  const Mat& m0() const { return params.value("mem.m0"); }
  Mat& m0() { return params.value("mem.m0"); }
};

namespace init {

inline Mat uniform_fan_in(Rng& rng, int rows, int cols) {
  double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Mat m(rows, cols);
  for (double& x : m.data) x = bound * (2.0 * rng.uniform() - 1.0);
  return m;
}

inline Mat scaled_identity(int rows, int cols, double s) {
  Mat m(rows, cols);
  for (int i = 0; i < std::min(rows, cols); ++i) m(i, i) = s;
  return m;
}

// Identity on a column block of the input, e.g. the forward temporal cell
// reads the first half of the latent, the backward cell the second half.
inline Mat block_identity(int rows, int cols, int row_offset, double s) {
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j)
    if (row_offset + j < rows) m(row_offset + j, j) = s;
  return m;
}

}  // namespace init

inline void add_gru_params(ParamStore& p, const std::string& prefix, int in, int hidden,
                           Rng& rng, const Mat& wn_x_init, double update_bias) {
  auto gate = [&](double bias_val) {
    Mat w = init::uniform_fan_in(rng, in + hidden, hidden);
    for (double& x : w.data) x *= 0.1;
    Mat b(1, hidden);
    for (double& x : b.data) x = bias_val;
    return std::make_pair(w, b);
  };
  auto [wr, br] = gate(0.0);
  auto [wu, bu] = gate(update_bias);
  p.add(prefix + ".wr", wr);
  p.add(prefix + ".wu", wu);
  Mat wn(in + hidden, hidden);
  for (int i = 0; i < in; ++i)
    for (int j = 0; j < hidden; ++j) wn(i, j) = wn_x_init(i, j);
  Mat wn_h = init::uniform_fan_in(rng, hidden, hidden);
  for (int i = 0; i < hidden; ++i)
    for (int j = 0; j < hidden; ++j) wn(in + i, j) = 0.1 * wn_h(i, j);
  p.add(prefix + ".wn", wn);
  p.add(prefix + ".bn", Mat(1, hidden));
  p.add(prefix + ".br", br);
  p.add(prefix + ".bu", bu);
}

inline GruVars bind_gru_params(ParamBinder& bind, const std::string& prefix) {
  return GruVars{bind(prefix + ".wr"), bind(prefix + ".wu"), bind(prefix + ".wn"),
                 bind(prefix + ".br"), bind(prefix + ".bu"), bind(prefix + ".bn")};
}

// Builds all learnable tensors. Choices that matter before any training:
// the encoder output projection and the temporal candidate maps start near
// identity so latents keep the token-embedding geometry, the update gates
// start leaky so later lines accumulate earlier content, and the query
// projection starts at the identity.
inline Model make_model(const ModelConfig& cfg, const Vocab& vocab) {
  if (cfg.dim % 2 != 0) throw std::invalid_argument("model dim must be even");
  Model m;
  m.cfg = cfg;
  m.vocab = vocab;
  ParamStore& p = m.params;
  Rng rng(cfg.init_seed);

  p.add("emb", rng.normal_mat(vocab.size(), cfg.enc_dim, 0.35));

  // encoder: unidirectional recurrent cell + output projection
  add_gru_params(p, "enc.gru", cfg.enc_dim, cfg.enc_dim, rng,
                 init::scaled_identity(cfg.enc_dim, cfg.enc_dim, 1.0), 1.0);
  p.add("enc.proj", init::scaled_identity(cfg.enc_dim, cfg.dim, 1.0));
  p.add("enc.bias", Mat(1, cfg.dim));

  // temporal bidirectional cell, hidden D/2 per direction
  int half = cfg.dim / 2;
  add_gru_params(p, "temporal.fwd", cfg.dim, half, rng,
                 init::block_identity(cfg.dim, half, 0, 1.0), 0.85);
  add_gru_params(p, "temporal.bwd", cfg.dim, half, rng,
                 init::block_identity(cfg.dim, half, half, 1.0), 0.85);

  {
    Rng m0rng(cfg.init_seed + 77);
    p.add("mem.m0", m0rng.normal_mat(cfg.slots, cfg.dim, 1.0 / std::sqrt(cfg.dim)));
  }
  p.add("mem.wq", init::scaled_identity(cfg.dim, cfg.dim, 1.0));

  // broadcast matrix: per layer a key block and a value block
  {
    Mat wm(cfg.dim, cfg.dec_layers * 2 * cfg.dec_dim);
    Rng wrng(cfg.init_seed + 99);
    for (int l = 0; l < cfg.dec_layers; ++l) {
      int k0 = l * 2 * cfg.dec_dim;
      int v0 = k0 + cfg.dec_dim;
      for (int i = 0; i < cfg.dim; ++i)
        for (int j = 0; j < cfg.dec_dim; ++j) {
          wm(i, k0 + j) = 0.1 * wrng.normal();
          if (i == j) wm(i, v0 + j) = 1.0;
        }
    }
    p.add("dec.wm", wm);
  }

  p.add("dec.pos", rng.normal_mat(cfg.max_pos, cfg.dec_dim, 0.1));
  for (int l = 0; l < cfg.dec_layers; ++l) {
    std::string pre = "dec.l" + std::to_string(l);
    Mat ones(1, cfg.dec_dim);
    for (double& x : ones.data) x = 1.0;
    p.add(pre + ".ln1.g", ones);
    p.add(pre + ".ln1.b", Mat(1, cfg.dec_dim));
    p.add(pre + ".wq", init::uniform_fan_in(rng, cfg.dec_dim, cfg.dec_dim));
    p.add(pre + ".wk", init::uniform_fan_in(rng, cfg.dec_dim, cfg.dec_dim));
    p.add(pre + ".wv", init::scaled_identity(cfg.dec_dim, cfg.dec_dim, 0.5));
    p.add(pre + ".wo", init::scaled_identity(cfg.dec_dim, cfg.dec_dim, 0.5));
    p.add(pre + ".ln2.g", ones);
    p.add(pre + ".ln2.b", Mat(1, cfg.dec_dim));
    p.add(pre + ".ff1", init::uniform_fan_in(rng, cfg.dec_dim, cfg.ff_dim));
    p.add(pre + ".ff1b", Mat(1, cfg.ff_dim));
    p.add(pre + ".ff2", Mat(cfg.ff_dim, cfg.dec_dim));  // zero: FFN is a no-op at start
    p.add(pre + ".ff2b", Mat(1, cfg.dec_dim));
  }
  Mat onesf(1, cfg.dec_dim);
  for (double& x : onesf.data) x = 1.0;
  p.add("dec.lnf.g", onesf);
  p.add("dec.lnf.b", Mat(1, cfg.dec_dim));
  return m;
}

// ---- encoder ----

// Encode one tokenized line to a 1xD latent: embeddings through the recurrent
// cell, final hidden through the output projection.
inline Var encode_line_t(Tape& t, ParamBinder& bind, const ModelConfig& cfg,
                         const std::vector<int>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("encode_line: empty token list");
  if (static_cast<int>(tokens.size()) > kMaxLineTokens)
    throw std::invalid_argument("encode_line: line exceeds 64 tokens");
  GruVars g = bind_gru_params(bind, "enc.gru");
  Var x = t.gather_rows(bind("emb"), tokens);
  Var h = t.constant(Mat(1, cfg.enc_dim));
  for (size_t i = 0; i < tokens.size(); ++i) h = gru_cell_t(t, t.row(x, static_cast<int>(i)), h, g);
  return t.add(t.matmul(h, bind("enc.proj")), bind("enc.bias"));
}

inline Mat encode_line(Model& model, const std::vector<int>& tokens) {
  Tape t;
  ParamBinder bind(t, model.params, false);
  return t.val(encode_line_t(t, bind, model.cfg, tokens));
}

// ---- decoder ----

// Prepend one row to a matrix of rows.
inline Var stack_prefix_row(Tape& t, Var first_row, Var rest) {
  std::vector<Var> rows;
  rows.push_back(first_row);
  for (int i = 0; i < t.val(rest).rows; ++i) rows.push_back(t.row(rest, i));
  return t.concat_rows(rows);
}

// Causal transformer forward over a token sequence with a one-position
// key/value prefix per layer derived from z_cond via the broadcast matrix.
// Returns TxV logits tied to the embedding table.
inline Var decoder_forward_t(Tape& t, ParamBinder& bind, const ModelConfig& cfg,
                             const std::vector<int>& tokens, Var z_cond) {
  int T = static_cast<int>(tokens.size());
  if (T == 0) throw std::invalid_argument("decoder: empty input");
  if (T > cfg.max_pos) throw std::invalid_argument("decoder: sequence too long");
  int dh = cfg.dec_dim / cfg.heads;
  Var prefix = t.matmul(z_cond, bind("dec.wm"));  // 1 x (L*2*dm)

  std::vector<int> pos_ids(T);
  for (int i = 0; i < T; ++i) pos_ids[i] = i;
  Var x = t.add(t.gather_rows(bind("emb"), tokens), t.gather_rows(bind("dec.pos"), pos_ids));

  // causal mask with the prefix column visible everywhere
  Mat mask(T, T + 1);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j)
      if (j > i) mask(i, j + 1) = -1e30;
  Var mask_c = t.constant(mask);

  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < cfg.dec_layers; ++l) {
    std::string pre = "dec.l" + std::to_string(l);
    Var a = t.layernorm_rows(x, bind(pre + ".ln1.g"), bind(pre + ".ln1.b"));
    Var q = t.matmul(a, bind(pre + ".wq"));
    Var k = t.matmul(a, bind(pre + ".wk"));
    Var v = t.matmul(a, bind(pre + ".wv"));
    int off = l * 2 * cfg.dec_dim;
    Var k_mem = t.slice_cols(prefix, off, off + cfg.dec_dim);
    Var v_mem = t.slice_cols(prefix, off + cfg.dec_dim, off + 2 * cfg.dec_dim);
    std::vector<Var> head_out;
    for (int h = 0; h < cfg.heads; ++h) {
      int c0 = h * dh, c1 = (h + 1) * dh;
      Var qh = t.slice_cols(q, c0, c1);
      Var kall = stack_prefix_row(t, t.slice_cols(k_mem, c0, c1), t.slice_cols(k, c0, c1));
      Var vall = stack_prefix_row(t, t.slice_cols(v_mem, c0, c1), t.slice_cols(v, c0, c1));
      Var scores = t.add(t.scale(t.matmul(qh, t.transpose(kall)), scale), mask_c);
      Var probs = t.softmax_rows(scores);
      head_out.push_back(t.matmul(probs, vall));
    }
    Var ctx = head_out[0];
    for (size_t h = 1; h < head_out.size(); ++h) ctx = t.concat_cols(ctx, head_out[h]);
    x = t.add(x, t.matmul(ctx, bind(pre + ".wo")));
    Var b = t.layernorm_rows(x, bind(pre + ".ln2.g"), bind(pre + ".ln2.b"));
    Var ff = t.add_row_broadcast(t.matmul(b, bind(pre + ".ff1")), bind(pre + ".ff1b"));
    ff = t.add_row_broadcast(t.matmul(t.relu(ff), bind(pre + ".ff2")), bind(pre + ".ff2b"));
    x = t.add(x, ff);
  }
  Var f = t.layernorm_rows(x, bind("dec.lnf.g"), bind("dec.lnf.b"));
  return t.matmul(f, t.transpose(bind("emb")));
}

// Greedy decoding; ties break toward the lowest token id. Returns generated
// ids up to (not including) EOS.
inline std::vector<int> greedy_decode(Model& model, const Mat& z_cond,
                                      const std::vector<int>& prompt, int max_new) {
  std::vector<int> tokens = prompt;
  std::vector<int> out;
  for (int step = 0; step < max_new; ++step) {
    Tape t;
    ParamBinder bind(t, model.params, false);
    Var logits = decoder_forward_t(t, bind, model.cfg, tokens, t.constant(z_cond));
    const Mat& L = t.val(logits);
    int best = 0;
    double bv = L(L.rows - 1, 0);
    for (int j = 1; j < L.cols; ++j)
      if (L(L.rows - 1, j) > bv) {
        bv = L(L.rows - 1, j);
        best = j;
      }
    if (best == Vocab::kEos) break;
    out.push_back(best);
    tokens.push_back(best);
    if (static_cast<int>(tokens.size()) >= model.cfg.max_pos) break;
  }
  return out;
}

inline std::string decode_answer(Model& model, const Mat& z_cond,
                                 const std::vector<int>& prompt, int max_new) {
  if (prompt.empty()) throw std::invalid_argument("decode_answer: empty prompt");
  require_finite(z_cond, "decode_answer conditioning");
  return detokenize(greedy_decode(model, z_cond, prompt, max_new), model.vocab);
}

// Autoencoding loss path: encode the line, teacher-force [BOS] + line through
// the decoder conditioned on the latent, cross-entropy against line + EOS.
inline Var autoencode_loss_t(Tape& t, ParamBinder& bind, const ModelConfig& cfg,
                             const std::vector<int>& line_tokens) {
  Var z = encode_line_t(t, bind, cfg, line_tokens);
  std::vector<int> input{Vocab::kBos};
  input.insert(input.end(), line_tokens.begin(), line_tokens.end());
  Var logits = decoder_forward_t(t, bind, cfg, input, z);
  std::vector<int> targets = line_tokens;
  targets.push_back(Vocab::kEos);
  return t.cross_entropy_rows(logits, targets);
}

// ---- prompts ----

// Answer prompt P_a. babi: "<bos> {subject} is in the"; vt: "<bos> the
// variable is".
inline std::vector<int> answer_prompt(const Vocab& vocab, const Sample& sample) {
  std::vector<int> ids{Vocab::kBos};
  if (sample.task == "hop1" || sample.task == "hop2") {
    auto qwords = split_words(sample.query);
    // "where is X ?" / "where is the X ?"
    std::string subject;
    for (size_t i = 2; i < qwords.size(); ++i) {
      if (qwords[i] == "?" || qwords[i] == "the") continue;
      subject = qwords[i];
      break;
    }
    if (subject.empty()) throw std::invalid_argument("cannot find query subject: " + sample.query);
    for (const auto& w : {subject, std::string("is"), std::string("in"), std::string("the")})
      ids.push_back(vocab.id(w));
  } else {
    for (const auto& w : {"the", "variable", "is"}) ids.push_back(vocab.id(w));
  }
  return ids;
}

// Supporting-fact prompt P_s.
inline std::vector<int> fact_prompt(const Vocab& vocab) {
  return {Vocab::kBos, vocab.id("the"), vocab.id("fact"), vocab.id("is")};
}

}  // namespace memr
