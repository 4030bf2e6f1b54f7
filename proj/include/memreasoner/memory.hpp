#pragma once

#include "memreasoner/core.hpp"
#include "memreasoner/tape.hpp"

namespace memr {

struct EmptyEpisodeError : std::runtime_error {
  EmptyEpisodeError() : std::runtime_error("episode must contain at least one line") {}
};

struct UninitializedMemoryError : std::runtime_error {
  UninitializedMemoryError() : std::runtime_error("read before any write") {}
};

struct EpisodeTooLargeError : std::runtime_error {
  explicit EpisodeTooLargeError(int e, int m)
      : std::runtime_error("episode of " + std::to_string(e) + " lines exceeds " +
                           std::to_string(m) + " memory slots (enable IU for long contexts)") {}
};

struct NoiseConfig {
  double sigma_xi = 0.0;   // write noise std
  double sigma_eta = 0.0;  // read noise std
  uint64_t seed = 0;
};

// Episodic memory: a learnable prior M0 and a per-episode state computed by
// the write solve. `current` is transient; write never mutates the input.
struct MemoryState {
  int slots = 512;
  int dim = 0;
  Mat prior;    // m x D
  Mat current;  // m x D, valid once written
  bool written = false;
};

inline MemoryState make_memory(int slots, int dim, Rng& rng) {
  MemoryState m;
  m.slots = slots;
  m.dim = dim;
  m.prior = rng.normal_mat(slots, dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  round_f32_inplace(m.prior);
  m.current = Mat(slots, dim);
  return m;
}

constexpr double kDefaultRidgeLambda = 1e-6;

// Ridge-regularized least squares: argmin_X |A X - B|^2 + lambda |X|^2.
// Primal normal equations when A is tall, dual when wide; both routes are
// exactly equal for lambda > 0 and built from differentiable tape ops.
inline Var pinv_solve_t(Tape& t, Var a, Var b, double lambda) {
  const Mat& A = t.val(a);
  const Mat& B = t.val(b);
  if (A.rows != B.rows) throw std::invalid_argument("pinv_solve: row mismatch");
  if (lambda < 0.0) throw std::invalid_argument("pinv_solve: lambda must be >= 0");
  require_finite(A, "pinv_solve A");
  require_finite(B, "pinv_solve B");
  Var at = t.transpose(a);
  if (A.cols <= A.rows) {
    Var s = t.add_diag(t.matmul(at, a), lambda);  // r x r
    return t.spd_solve(s, t.matmul(at, b));
  }
  Var s = t.add_diag(t.matmul(a, at), lambda);  // p x p
  return t.matmul(at, t.spd_solve(s, b));
}

inline Mat pinv_solve(const Mat& a, const Mat& b, double lambda = kDefaultRidgeLambda) {
  Tape t;
  return t.val(pinv_solve_t(t, t.constant(a), t.constant(b), lambda));
}

// M_hat = (Z_xi M0^+)^+ Z_xi with Z_xi the noisy ordered latents. Returns the
// m x D episode state. Gradient flows into both M0 and the latents.
inline Var write_t(Tape& t, Var m0, Var noisy_latents, double lambda = kDefaultRidgeLambda) {
  // W = Z M0^+  ==  (pinv_solve(M0^T, Z^T))^T, shape E x m
  Var w = t.transpose(pinv_solve_t(t, t.transpose(m0), t.transpose(noisy_latents), lambda));
  // M_hat = W^+ Z, shape m x D
  return pinv_solve_t(t, w, noisy_latents, lambda);
}

// z_r = (z_q M_hat^+ + eta) M_hat for a 1xD query row.
inline Var read_t(Tape& t, Var mhat, Var zq, const Mat& eta_noise,
                  double lambda = kDefaultRidgeLambda) {
  Var w = t.transpose(pinv_solve_t(t, t.transpose(mhat), t.transpose(zq), lambda));  // 1 x m
  if (!eta_noise.empty()) w = t.add(w, t.constant(eta_noise));
  return t.matmul(w, mhat);
}

inline MemoryState write(const MemoryState& mem, const Mat& ordered_latents,
                         const NoiseConfig& noise, double lambda = kDefaultRidgeLambda) {
  if (ordered_latents.rows < 1) throw EmptyEpisodeError();
  if (ordered_latents.cols != mem.dim) throw std::invalid_argument("write: dim mismatch");
  require_finite(ordered_latents, "write latents");
  Mat z = ordered_latents;
  if (noise.sigma_xi > 0.0) {
    Rng rng(noise.seed);
    Mat xi = rng.normal_mat(z.rows, z.cols, noise.sigma_xi);
    z = z + xi;
  }
  Tape t;
  Mat current = t.val(write_t(t, t.constant(mem.prior), t.constant(z), lambda));
  require_finite(current, "write result");
  MemoryState out = mem;
  out.current = std::move(current);
  out.written = true;
  return out;
}

inline Mat read(const MemoryState& mem, const Mat& query_latent, const NoiseConfig& noise,
                double lambda = kDefaultRidgeLambda) {
  if (!mem.written) throw UninitializedMemoryError();
  require_finite(query_latent, "read query");
  Mat eta;
  if (noise.sigma_eta > 0.0) {
    Rng rng(noise.seed + 0x9e3779b97f4a7c15ull);
    eta = rng.normal_mat(1, mem.slots, noise.sigma_eta);
  }
  Tape t;
  Mat out = t.val(read_t(t, t.constant(mem.current), t.constant(query_latent), eta, lambda));
  require_finite(out, "read result");
  return out;
}

struct ProjectionParams {
  Mat w_q;  // D x D
};

inline Var project_query_t(Tape& t, Var wq, Var zq) {
  return t.matmul(zq, t.transpose(wq));  // row form of W_q z_q
}

inline Mat project_query(const ProjectionParams& params, const Mat& zq) {
  Tape t;
  return t.val(project_query_t(t, t.constant(params.w_q), t.constant(zq)));
}

}  // namespace memr
