#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>

#include "memreasoner/core.hpp"
#include "memreasoner/vocab.hpp"

namespace memr {

struct WorldConfig {
  std::vector<std::string> entities = {"John", "Mary", "Sandra", "Daniel"};
  std::vector<std::string> verbs = {"moved", "went", "journeyed", "travelled", "went back"};
  std::vector<std::string> locations = {"bedroom", "bathroom", "kitchen",
                                        "garden",  "office",   "hallway"};
  std::vector<std::string> objects = {"football", "apple", "milk"};
};

// Fixed test-time mapping to locations never seen in task data.
inline const std::map<std::string, std::string>& location_swap_map() {
  static const std::map<std::string, std::string> m = {
      {"office", "library"}, {"garden", "garage"},    {"kitchen", "cafe"},
      {"bathroom", "attic"}, {"bedroom", "basement"}, {"hallway", "gym"}};
  return m;
}

// Out-of-task filler pool used for hard distractor padding.
inline const std::vector<std::string>& hard_filler_pool() {
  static const std::vector<std::string> pool = {
      "The grass is green.", "The sky is blue.", "The sun is yellow.",
      "Here we go.",         "There and back again."};
  return pool;
}

struct SampleMeta {
  int hops = 1;
  int chains = 0;
  std::string pad_kind = "none";
  int target_tokens = 0;
  uint64_t seed = 0;
};

// One task instance. `supporting` holds original-line indices in hop order
// (hop i resolves supporting[i]); for single-hop tasks that is also sorted.
struct Sample {
  std::string task;  // hop1 | hop2 | vt1 | vt2
  std::string query;
  std::vector<std::string> context;
  std::vector<std::string> answer;  // single element for babi tasks, one per hop for vt
  std::vector<int> supporting;
  SampleMeta meta;
};

inline int count_tokens(const std::string& line) {
  auto w = split_words(line);
  return w.empty() ? 1 : static_cast<int>(w.size());
}

inline int count_context_tokens(const Sample& s) {
  int n = 0;
  for (const auto& line : s.context) n += count_tokens(line);
  return n;
}

inline std::string movement_line(const std::string& entity, const std::string& verb,
                                 const std::string& location) {
  return entity + " " + verb + " to the " + location + ".";
}

namespace detail {

inline void insert_line(Sample& s, int gap, const std::string& line) {
  s.context.insert(s.context.begin() + gap, line);
  for (int& idx : s.supporting)
    if (idx >= gap) ++idx;
}

inline void insert_blanks(Sample& s, int count, Rng& rng) {
  for (int i = 0; i < count; ++i)
    insert_line(s, static_cast<int>(rng.uniform_int(s.context.size() + 1)), "");
}

}  // namespace detail

// Single-hop entity location task: the answer is the location of the queried
// entity's most recent movement.
inline Sample gen_hop1(Rng& rng, const WorldConfig& cfg, int lines) {
  if (lines < 1) throw std::invalid_argument("gen_hop1: lines must be >= 1");
  Sample s;
  s.task = "hop1";
  s.meta.hops = 1;
  std::vector<int> entity_of(lines);
  std::vector<std::string> loc_of(lines);
  for (int i = 0; i < lines; ++i) {
    int e = static_cast<int>(rng.uniform_int(cfg.entities.size()));
    const std::string& verb = cfg.verbs[rng.uniform_int(cfg.verbs.size())];
    const std::string& loc = cfg.locations[rng.uniform_int(cfg.locations.size())];
    entity_of[i] = e;
    loc_of[i] = loc;
    s.context.push_back(movement_line(cfg.entities[e], verb, loc));
  }
  std::vector<int> present;
  for (int i = 0; i < lines; ++i)
    if (std::find(present.begin(), present.end(), entity_of[i]) == present.end())
      present.push_back(entity_of[i]);
  int target = present[rng.uniform_int(present.size())];
  int last = -1;
  for (int i = 0; i < lines; ++i)
    if (entity_of[i] == target) last = i;
  s.query = "Where is " + cfg.entities[target] + "?";
  s.answer = {loc_of[last]};
  s.supporting = {last};
  detail::insert_blanks(s, static_cast<int>(rng.uniform_int(3)), rng);
  return s;
}

// Two-hop task: objects travel with their holder until discarded. Answering
// "Where is the X?" takes the object event line (hop 1) plus the movement
// line that fixes the holder's location (hop 2).
inline Sample gen_hop2(Rng& rng, const WorldConfig& cfg, int lines) {
  if (lines < 2) throw std::invalid_argument("gen_hop2: lines must be >= 2");
  struct ObjState {
    int holder = -1;          // entity currently holding, -1 if free
    int event_line = -1;      // latest pickup/discard line
    bool discarded = false;
    int discard_loc_line = -1;  // holder movement line fixing the drop location
  };
  for (int attempt = 0;; ++attempt) {
    Sample s;
    s.task = "hop2";
    s.meta.hops = 2;
    int ne = static_cast<int>(cfg.entities.size());
    std::vector<int> last_move(ne, -1);  // movement line index per entity
    std::vector<ObjState> obj(cfg.objects.size());
    for (int i = 0; i < lines; ++i) {
      bool can_pick = false, can_drop = false;
      for (size_t o = 0; o < obj.size(); ++o) {
        if (obj[o].holder < 0) can_pick = true;
        if (obj[o].holder >= 0) can_drop = true;
      }
      bool mover_exists = std::find_if(last_move.begin(), last_move.end(),
                                       [](int v) { return v >= 0; }) != last_move.end();
      double roll = rng.uniform();
      if (roll < 0.30 && mover_exists && can_pick) {
        std::vector<int> free_objs;
        for (size_t o = 0; o < obj.size(); ++o)
          if (obj[o].holder < 0 && !obj[o].discarded) free_objs.push_back(static_cast<int>(o));
        if (free_objs.empty()) {
          for (size_t o = 0; o < obj.size(); ++o)
            if (obj[o].holder < 0) free_objs.push_back(static_cast<int>(o));
        }
        std::vector<int> movers;
        for (int e = 0; e < ne; ++e)
          if (last_move[e] >= 0) movers.push_back(e);
        int e = movers[rng.uniform_int(movers.size())];
        int o = free_objs[rng.uniform_int(free_objs.size())];
        obj[o].holder = e;
        obj[o].event_line = i;
        obj[o].discarded = false;
        s.context.push_back(cfg.entities[e] + " picked up the " + cfg.objects[o] + ".");
      } else if (roll < 0.42 && can_drop) {
        std::vector<int> held;
        for (size_t o = 0; o < obj.size(); ++o)
          if (obj[o].holder >= 0) held.push_back(static_cast<int>(o));
        int o = held[rng.uniform_int(held.size())];
        int e = obj[o].holder;
        obj[o].holder = -1;
        obj[o].discarded = true;
        obj[o].event_line = i;
        obj[o].discard_loc_line = last_move[e];
        s.context.push_back(cfg.entities[e] + " discarded the " + cfg.objects[o] + ".");
      } else {
        int e = static_cast<int>(rng.uniform_int(ne));
        const std::string& verb = cfg.verbs[rng.uniform_int(cfg.verbs.size())];
        const std::string& loc = cfg.locations[rng.uniform_int(cfg.locations.size())];
        last_move[e] = i;
        s.context.push_back(movement_line(cfg.entities[e], verb, loc));
      }
    }
    // queryable objects: location chain resolves to a movement line
    std::vector<std::pair<int, std::pair<int, int>>> queryable;  // obj -> (event, move)
    for (size_t o = 0; o < obj.size(); ++o) {
      if (obj[o].discarded && obj[o].discard_loc_line >= 0)
        queryable.push_back({static_cast<int>(o), {obj[o].event_line, obj[o].discard_loc_line}});
      else if (obj[o].holder >= 0 && last_move[obj[o].holder] >= 0)
        queryable.push_back({static_cast<int>(o), {obj[o].event_line, last_move[obj[o].holder]}});
    }
    if (queryable.empty()) {
      if (attempt > 200) throw std::runtime_error("gen_hop2: cannot construct a queryable sample");
      continue;
    }
    auto pick = queryable[rng.uniform_int(queryable.size())];
    const std::string& obj_name = cfg.objects[pick.first];
    int move_line = pick.second.second;
    auto words = split_words(s.context[move_line]);
    s.query = "Where is the " + obj_name + "?";
    s.answer = {words[words.size() - 2]};  // "... to the {location} ."
    s.supporting = {pick.second.first, move_line};
    detail::insert_blanks(s, static_cast<int>(rng.uniform_int(3)), rng);
    return s;
  }
}

// Variable tracking: `chains` distinct 5-digit values; hop-2 chains add one
// referencing variable per chain. Answer lists the variables reachable from
// the queried value, one per hop.
inline Sample gen_vt(Rng& rng, int hops, int chains) {
  if (hops != 1 && hops != 2) throw std::invalid_argument("gen_vt: hops must be 1 or 2");
  if (chains < 1 || hops * chains > 26) throw std::invalid_argument("gen_vt: bad chain count");
  Sample s;
  s.task = hops == 1 ? "vt1" : "vt2";
  s.meta.hops = hops;
  s.meta.chains = chains;
  std::vector<int> letters(26);
  for (int i = 0; i < 26; ++i) letters[i] = i;
  rng.shuffle(letters);
  auto name = [&](int k) { return std::string(5, static_cast<char>('A' + letters[k])); };
  std::set<int> used;
  std::vector<int> values;
  while (static_cast<int>(values.size()) < chains) {
    int v = 10000 + static_cast<int>(rng.uniform_int(90000));
    if (used.insert(v).second) values.push_back(v);
  }
  struct Line {
    std::string text;
    int chain;
    int hop;  // 1 = direct assignment, 2 = reference
  };
  std::vector<Line> lines;
  for (int c = 0; c < chains; ++c) {
    std::string a = name(hops * c);
    lines.push_back({"VAR " + a + " = " + std::to_string(values[c]), c, 1});
    if (hops == 2) {
      std::string b = name(hops * c + 1);
      lines.push_back({"VAR " + b + " = VAR " + a, c, 2});
    }
  }
  rng.shuffle(lines);
  int qc = static_cast<int>(rng.uniform_int(chains));
  s.query = "Find all variables that are assigned the value " + std::to_string(values[qc]);
  s.supporting.assign(hops, -1);
  for (size_t i = 0; i < lines.size(); ++i) {
    s.context.push_back(lines[i].text);
    if (lines[i].chain == qc) s.supporting[lines[i].hop - 1] = static_cast<int>(i);
  }
  for (int h = 0; h < hops; ++h) {
    auto words = split_words(s.context[s.supporting[h]]);
    s.answer.push_back(words[1]);  // "var {name} = ..."
  }
  detail::insert_blanks(s, (chains - 2) / 2 > 0 ? (chains - 2) / 2 : 0, rng);
  return s;
}

// Hard distractor padding from the fixed filler pool; keeps the answer and
// remaps supporting indices.
inline Sample pad_hard(const Sample& sample, int target_tokens, Rng& rng) {
  Sample s = sample;
  if (target_tokens <= 0) return s;
  const auto& pool = hard_filler_pool();
  int tokens = count_context_tokens(s);
  while (tokens < target_tokens) {
    const std::string& line = pool[rng.uniform_int(pool.size())];
    detail::insert_line(s, static_cast<int>(rng.uniform_int(s.context.size() + 1)), line);
    tokens += count_tokens(line);
  }
  s.meta.pad_kind = "hard";
  s.meta.target_tokens = target_tokens;
  return s;
}

struct InvalidTaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// In-distribution movement-sentence padding. Lines inserted after the final
// supporting fact must not mention that fact's entity, which preserves the
// answer; earlier insertions may use any entity.
inline Sample pad_soft(const Sample& sample, int target_tokens, Rng& rng,
                       const WorldConfig& cfg = WorldConfig()) {
  if (sample.task != "hop1" && sample.task != "hop2")
    throw InvalidTaskError("pad_soft: only babi-style samples can take soft padding");
  Sample s = sample;
  if (target_tokens <= 0) return s;
  int tokens = count_context_tokens(s);
  while (tokens < target_tokens) {
    int last_sf = s.supporting.back();  // hop-ordered: final hop fact
    auto sf_words = split_words(s.context[last_sf]);
    const std::string& protected_entity = sf_words[0];
    int gap = static_cast<int>(rng.uniform_int(s.context.size() + 1));
    std::string entity;
    do {
      entity = cfg.entities[rng.uniform_int(cfg.entities.size())];
    } while (gap > last_sf && split_words(entity)[0] == protected_entity);
    const std::string& verb = cfg.verbs[rng.uniform_int(cfg.verbs.size())];
    const std::string& loc = cfg.locations[rng.uniform_int(cfg.locations.size())];
    std::string line = movement_line(entity, verb, loc);
    detail::insert_line(s, gap, line);
    tokens += count_tokens(line);
  }
  s.meta.pad_kind = "soft";
  s.meta.target_tokens = target_tokens;
  return s;
}

// Word-boundary replacement used by the location swap.
inline std::string replace_words(const std::string& text,
                                 const std::map<std::string, std::string>& mapping) {
  std::string out;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    auto it = mapping.find(word);
    out += it == mapping.end() ? word : it->second;
    word.clear();
  };
  for (char c : text) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      word.push_back(c);
    } else {
      flush();
      out.push_back(c);
    }
  }
  flush();
  return out;
}

inline Sample swap_locations(const Sample& sample,
                             const std::map<std::string, std::string>& mapping =
                                 location_swap_map()) {
  Sample s = sample;
  for (auto& line : s.context) line = replace_words(line, mapping);
  for (auto& a : s.answer) {
    auto it = mapping.find(a);
    if (it != mapping.end()) a = it->second;
  }
  return s;
}

inline std::map<std::string, std::string> inverse_map(
    const std::map<std::string, std::string>& mapping) {
  std::map<std::string, std::string> inv;
  for (const auto& [k, v] : mapping) inv[v] = k;
  return inv;
}

// Deterministic per-sample seed derivation (splitmix64 finalizer).
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

struct GenSpec {
  std::string task = "hop1";  // hop1 | hop2 | vt1 | vt2
  int n = 100;
  uint64_t seed = 0;
  int min_lines = 2;
  int max_lines = 8;
  std::vector<int> chains = {2, 4, 6, 8, 10};  // vt tasks cycle through these
  int pad_tokens = 0;
  std::string pad_kind = "none";  // none | hard | soft
};

inline Sample gen_sample(const GenSpec& spec, uint64_t index, const WorldConfig& cfg) {
  Rng rng(mix_seed(spec.seed, index));
  Sample s;
  if (spec.task == "hop1") {
    int lines = spec.min_lines +
                static_cast<int>(rng.uniform_int(spec.max_lines - spec.min_lines + 1));
    s = gen_hop1(rng, cfg, lines);
  } else if (spec.task == "hop2") {
    int lines = std::max(2, spec.min_lines) +
                static_cast<int>(rng.uniform_int(spec.max_lines - spec.min_lines + 1));
    s = gen_hop2(rng, cfg, lines);
  } else if (spec.task == "vt1" || spec.task == "vt2") {
    int chains = spec.chains[index % spec.chains.size()];
    s = gen_vt(rng, spec.task == "vt1" ? 1 : 2, chains);
  } else {
    throw InvalidTaskError("unknown task: " + spec.task);
  }
  if (spec.pad_kind == "hard" && spec.pad_tokens > 0) {
    s = pad_hard(s, spec.pad_tokens, rng);
  } else if (spec.pad_kind == "soft" && spec.pad_tokens > 0) {
    s = pad_soft(s, spec.pad_tokens, rng, cfg);
  }
  s.meta.seed = mix_seed(spec.seed, index);
  return s;
}

inline std::vector<Sample> gen_dataset(const GenSpec& spec, const WorldConfig& cfg = WorldConfig()) {
  std::vector<Sample> out;
  out.reserve(spec.n);
  for (int i = 0; i < spec.n; ++i) out.push_back(gen_sample(spec, i, cfg));
  return out;
}

// Full token vocabulary over everything the generators can emit, in a fixed
// construction order. Swapped location names are included so they can be
// scored at test time even though task data never contains them.
inline Vocab build_vocab(const WorldConfig& cfg = WorldConfig()) {
  Vocab v;
  auto add_words = [&](const std::string& text) {
    for (const auto& w : split_words(text)) v.add(w);
  };
  for (const auto& e : cfg.entities) add_words(e);
  for (const auto& verb : cfg.verbs) add_words(verb);
  add_words("to the .");
  for (const auto& l : cfg.locations) add_words(l);
  for (const auto& [from, to] : location_swap_map()) v.add(to);
  for (const auto& o : cfg.objects) add_words(o);
  add_words("picked up discarded");
  add_words("where is ? in");
  add_words("var = find all variables that are assigned value");
  for (int d = 0; d < 10; ++d) v.add(std::string(1, static_cast<char>('0' + d)));
  for (int a = 0; a < 26; ++a) v.add(std::string(5, static_cast<char>('a' + a)));
  for (const auto& f : hard_filler_pool()) add_words(f);
  add_words("answer fact :");
  return v;
}

// Synthetic stand-in for the generic pretraining corpus: short fact sentences
// spanning the whole vocabulary (all locations, objects, variables, fillers).
inline std::vector<std::string> make_pretrain_corpus(int n, uint64_t seed,
                                                     const WorldConfig& cfg = WorldConfig()) {
  Rng rng(seed);
  std::vector<std::string> all_locations = cfg.locations;
  for (const auto& [from, to] : location_swap_map()) all_locations.push_back(to);
  std::vector<std::string> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    double roll = rng.uniform();
    const std::string& e = cfg.entities[rng.uniform_int(cfg.entities.size())];
    const std::string& loc = all_locations[rng.uniform_int(all_locations.size())];
    if (roll < 0.30) {
      const std::string& verb = cfg.verbs[rng.uniform_int(cfg.verbs.size())];
      out.push_back(movement_line(e, verb, loc));
    } else if (roll < 0.55) {
      out.push_back(e + " is in the " + loc + ".");
    } else if (roll < 0.65) {
      const std::string& o = cfg.objects[rng.uniform_int(cfg.objects.size())];
      out.push_back(rng.uniform() < 0.5 ? e + " picked up the " + o + "."
                                        : e + " discarded the " + o + ".");
    } else if (roll < 0.72) {
      const std::string& o = cfg.objects[rng.uniform_int(cfg.objects.size())];
      out.push_back(o + " is in the " + loc + ".");
    } else if (roll < 0.90) {
      std::string name(5, static_cast<char>('A' + rng.uniform_int(26)));
      int value = 10000 + static_cast<int>(rng.uniform_int(90000));
      if (rng.uniform() < 0.75) {
        out.push_back("VAR " + name + " = " + std::to_string(value));
      } else {
        std::string ref(5, static_cast<char>('A' + rng.uniform_int(26)));
        out.push_back("VAR " + name + " = VAR " + ref);
      }
    } else {
      out.push_back(hard_filler_pool()[rng.uniform_int(hard_filler_pool().size())]);
    }
  }
  return out;
}

}  // namespace memr
