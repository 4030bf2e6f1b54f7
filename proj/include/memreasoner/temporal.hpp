#pragma once

#include "memreasoner/core.hpp"
#include "memreasoner/tape.hpp"

namespace memr {

// One direction of a gated recurrent cell. Weights act on [x, h] rows:
//   r = sigmoid([x,h] Wr + br), u = sigmoid([x,h] Wu + bu),
//   n = tanh([x, r.h] Wn + bn), h' = (1-u).n + u.h
struct GruVars {
  Var wr, wu, wn;  // (in+hidden) x hidden
  Var br, bu, bn;  // 1 x hidden
};

inline Var gru_cell_t(Tape& t, Var x, Var h, const GruVars& g) {
  Var cat = t.concat_cols(x, h);
  Var r = t.sigmoid(t.add(t.matmul(cat, g.wr), g.br));
  Var u = t.sigmoid(t.add(t.matmul(cat, g.wu), g.bu));
  Var cat2 = t.concat_cols(x, t.hadamard(r, h));
  Var n = t.tanh_(t.add(t.matmul(cat2, g.wn), g.bn));
  // (1-u).n + u.h  ==  n + u.(h-n)
  return t.add(n, t.hadamard(u, t.sub(h, n)));
}

// Bidirectional pass over E latent rows; output row i = [fwd_i, bwd_i].
// Initial hidden states are zero.
inline std::vector<Var> encode_order_t(Tape& t, const std::vector<Var>& latents,
                                       const GruVars& fwd, const GruVars& bwd) {
  int e = static_cast<int>(latents.size());
  if (e < 1) throw EmptyEpisodeError();
  int hidden = t.val(fwd.br).cols;
  std::vector<Var> f(e), b(e);
  Var h = t.constant(Mat(1, hidden));
  for (int i = 0; i < e; ++i) {
    h = gru_cell_t(t, latents[i], h, fwd);
    f[i] = h;
  }
  h = t.constant(Mat(1, hidden));
  for (int i = e - 1; i >= 0; --i) {
    h = gru_cell_t(t, latents[i], h, bwd);
    b[i] = h;
  }
  std::vector<Var> out(e);
  for (int i = 0; i < e; ++i) out[i] = t.concat_cols(f[i], b[i]);
  return out;
}

// Standard sinusoidal table entry: pair 2k holds sin(pos / 10000^(2k/D)),
// pair 2k+1 the matching cos.
inline Mat sinusoidal_encoding(int pos, int dim) {
  Mat pe(1, dim);
  for (int k = 0; 2 * k < dim; ++k) {
    double freq = std::pow(10000.0, 2.0 * k / dim);
    pe(0, 2 * k) = std::sin(pos / freq);
    pe(0, 2 * k + 1) = std::cos(pos / freq);
  }
  return pe;
}

// Reversed positional encoding: the last line receives position 0, so the
// most recent facts are encoded alike across episodes of different length.
inline std::vector<Var> encode_order_sinusoidal_t(Tape& t, const std::vector<Var>& latents) {
  int e = static_cast<int>(latents.size());
  if (e < 1) throw EmptyEpisodeError();
  int dim = t.val(latents[0]).cols;
  if (dim % 2 != 0) throw std::invalid_argument("sinusoidal encoding needs even dim");
  std::vector<Var> out(e);
  for (int i = 0; i < e; ++i)
    out[i] = t.add(latents[i], t.constant(sinusoidal_encoding(e - 1 - i, dim)));
  return out;
}

// Plain-matrix helpers used by tests and non-training callers.

struct GruParams {
  Mat wr, wu, wn;
  Mat br, bu, bn;
};

inline GruVars bind_gru(Tape& t, const GruParams& p, bool needs_grad = false) {
  return GruVars{t.input(p.wr, needs_grad), t.input(p.wu, needs_grad), t.input(p.wn, needs_grad),
                 t.input(p.br, needs_grad), t.input(p.bu, needs_grad), t.input(p.bn, needs_grad)};
}

inline Mat gru_cell(const Mat& x, const Mat& h, const GruParams& p) {
  Tape t;
  return t.val(gru_cell_t(t, t.constant(x), t.constant(h), bind_gru(t, p)));
}

inline Mat encode_order(const Mat& latents, const GruParams& fwd, const GruParams& bwd) {
  Tape t;
  std::vector<Var> rows(latents.rows);
  for (int i = 0; i < latents.rows; ++i) rows[i] = t.constant(latents.row(i));
  std::vector<Var> out = encode_order_t(t, rows, bind_gru(t, fwd), bind_gru(t, bwd));
  Mat m(latents.rows, latents.cols);
  for (int i = 0; i < latents.rows; ++i) m.set_row(i, t.val(out[i]));
  return m;
}

inline Mat encode_order_sinusoidal(const Mat& latents) {
  Tape t;
  std::vector<Var> rows(latents.rows);
  for (int i = 0; i < latents.rows; ++i) rows[i] = t.constant(latents.row(i));
  std::vector<Var> out = encode_order_sinusoidal_t(t, rows);
  Mat m(latents.rows, latents.cols);
  for (int i = 0; i < latents.rows; ++i) m.set_row(i, t.val(out[i]));
  return m;
}

}  // namespace memr
