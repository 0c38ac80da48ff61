#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dan/autodiff.hpp"
#include "dan/tensor.hpp"

namespace dan {

// Two-level factorization of a position count: N = P·Q and Q = Pp·Qp.
struct Factorization {
  std::size_t P = 1, Q = 1, Pp = 1, Qp = 1;
  // True when some factor is 1 although N > 1 (e.g. N prime).
  bool degenerate = false;
};

// Picks the factorization minimizing max(P, Pp, Qp). Remaining ties prefer
// the most balanced triple (largest minimum factor), then P ≤ Pp ≤ Qp.
Factorization choose_factorization(std::size_t n);

struct AttentionConfig {
  std::size_t channels = 32;
  std::size_t reduction = 2;  // k; key/query dimension d = channels / k
  std::size_t positions = 1;  // N
  std::size_t P = 1, Q = 1, Pp = 1, Qp = 1;

  std::size_t key_dim() const { return channels / reduction; }
  // Throws FactorizationError or ContractError when inconsistent.
  void validate() const;

  static AttentionConfig for_positions(std::size_t positions, std::size_t channels, std::size_t reduction);
};

class Permutation {
 public:
  Permutation() = default;
  // Throws ContractError unless `forward` is a bijection on [0, n).
  explicit Permutation(std::vector<std::size_t> forward);

  static Permutation identity(std::size_t n);

  std::size_t size() const noexcept { return forward_.size(); }
  const std::vector<std::size_t>& forward() const noexcept { return forward_; }
  const std::vector<std::size_t>& inverse() const noexcept { return inverse_; }
  Permutation inverted() const;
  bool is_identity() const;
  // Applying the result equals applying `*this` and then `next`.
  Permutation then(const Permutation& next) const;

  bool operator==(const Permutation& other) const { return forward_ == other.forward_; }

 private:
  std::vector<std::size_t> forward_;
  std::vector<std::size_t> inverse_;
};

// Stride-p interlacing: group g = {g + j·p} lands on slice [g·n/p, (g+1)·n/p).
Permutation interlace_permutation(std::size_t n, std::size_t p);

// Interlaces every contiguous block of `block` positions independently.
Permutation blockwise_interlace(std::size_t n, std::size_t block, std::size_t p);

// Column j of the result is column forward[j] of x (x: C×N).
template <class T>
TensorT<T> apply_permutation(const TensorT<T>& x, const Permutation& perm);

template <class T>
struct AttentionWeights {
  TensorT<T> wf, wg, wh;  // d×C
  TensorT<T> wv;          // C×d

  std::size_t channels() const { return wf.dim(1); }
  std::size_t key_dim() const { return wf.dim(0); }
  void validate(std::size_t channels) const;

  // Normal init with stddev 1/√C for the d×C projections and 1/√d for W_v.
  static AttentionWeights random(std::size_t channels, std::size_t key_dim, std::uint64_t seed);

  template <class U>
  AttentionWeights<U> cast() const {
    return {wf.template cast<U>(), wg.template cast<U>(), wh.template cast<U>(), wv.template cast<U>()};
  }
};

enum class GroupMode { long_range, short_range };

// How positions are split into independent attention groups: permute the
// columns by `perm`, then every run of `group_size` consecutive columns is
// one group.
struct Grouping {
  GroupMode mode = GroupMode::short_range;
  std::size_t parts = 1;
  std::size_t group_size = 1;
  Permutation perm;

  std::size_t positions() const { return parts * group_size; }

  // `parts` groups of stride-`parts` positions.
  static Grouping long_range(std::size_t n, std::size_t parts);
  // Contiguous runs of `group_size` positions.
  static Grouping short_range(std::size_t n, std::size_t group_size);
  // Level-1 interlace into `outer_parts` parts, then stride-`inner_parts`
  // interlace inside every part; groups hold n / (outer_parts·inner_parts).
  static Grouping nested_long_range(std::size_t n, std::size_t outer_parts, std::size_t inner_parts);
};

// The three stages of the two-level layer, as groupings over input positions.
struct DalStages {
  Permutation level1;    // stride-P interlace
  Grouping inner_long;   // applied in the level-1 frame
  Grouping inner_short;  // applied in the level-1 frame
  Grouping outer_short;  // applied in the input frame
  // Same stages, each expressed over input-frame positions.
  std::array<Grouping, 3> in_input_frame() const;
};

DalStages dal_stages(const AttentionConfig& cfg);

// Z = W_v·[(W_h x)·A], A = softmax_cols((W_f x)ᵀ(W_g x)/√d), x: C×q.
template <class T>
TensorT<T> block_attention(const TensorT<T>& x, const AttentionWeights<T>& w);

template <class T>
TensorT<T> grouped_attention(const TensorT<T>& x, const Grouping& g, const AttentionWeights<T>& w);

template <class T>
TensorT<T> dense_self_attention(const TensorT<T>& x, const AttentionWeights<T>& w);

template <class T>
TensorT<T> dal_forward(const TensorT<T>& x, const AttentionConfig& cfg, const AttentionWeights<T>& inner_long,
                       const AttentionWeights<T>& inner_short, const AttentionWeights<T>& outer_short);

// Taped counterparts.
template <class T>
struct AttentionVars {
  Var<T> wf, wg, wh, wv;
};

template <class T>
AttentionVars<T> bind_weights(Tape<T>& tape, const AttentionWeights<T>& w, bool track_gradients);

namespace ag {

template <class T>
Var<T> grouped_attention(const Var<T>& x, const Grouping& g, const AttentionVars<T>& w);

template <class T>
Var<T> dal_forward(const Var<T>& x, const AttentionConfig& cfg, const AttentionVars<T>& inner_long,
                   const AttentionVars<T>& inner_short, const AttentionVars<T>& outer_short);

}  // namespace ag

// ---------------------------------------------------------------------------
// Verification views.

enum class SoftmaxAxis { columns, rows };

// Πᵀ·diag(A_1, …, A_parts)·Π for one stage evaluated at x: entry (i, j) is
// the weight of input position i in output position j.
// `axis` exists so verification can be fed a deliberately wrong normalization.
template <class T>
TensorT<T> stage_affinity(const TensorT<T>& x, const Grouping& g, const AttentionWeights<T>& w,
                          std::size_t max_positions = 4096, SoftmaxAxis axis = SoftmaxAxis::columns);

template <class T>
struct EffectiveAffinity {
  std::array<TensorT<T>, 3> stages;  // inner-long, inner-short, outer-short
  TensorT<T> product;                // stages[0]·stages[1]·stages[2]
  // W_v·W_h chained over the stages: dal_forward(x) == channel_map·x·product.
  TensorT<T> channel_map;
};

template <class T>
EffectiveAffinity<T> effective_affinity(const TensorT<T>& x, const AttentionConfig& cfg,
                                        const AttentionWeights<T>& inner_long,
                                        const AttentionWeights<T>& inner_short,
                                        const AttentionWeights<T>& outer_short, std::size_t max_positions = 4096,
                                        SoftmaxAxis axis = SoftmaxAxis::columns);

// ---------------------------------------------------------------------------
// Cost model.

enum class AttentionScheme { dense, interlaced, dal };

std::string to_string(AttentionScheme s);
AttentionScheme parse_scheme(const std::string& s);

// Closed-form operation counts (N = h·w):
//   dense       4NC²/k + 2N²C/k
//   interlaced  4NC²/k + 3N^{3/2}C/k
//   dal        12NC²/k + 6N^{4/3}C/k
double flops_estimate(std::size_t h, std::size_t w, std::size_t c, std::size_t k, AttentionScheme scheme);

}  // namespace dan
