#include "dan/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "dan/rng.hpp"

namespace dan {

// ---------------------------------------------------------------------------
// Factorization and configuration

Factorization choose_factorization(std::size_t n) {
  if (n == 0) throw ContractError("choose_factorization needs n >= 1");
  using Key = std::tuple<std::size_t, std::size_t, bool, std::size_t, std::size_t>;
  Factorization best;
  Key best_key{};
  bool found = false;
  for (std::size_t p = 1; p <= n; ++p) {
    if (n % p) continue;
    const std::size_t q = n / p;
    for (std::size_t pp = 1; pp <= q; ++pp) {
      if (q % pp) continue;
      const std::size_t qp = q / pp;
      const std::size_t hi = std::max({p, pp, qp});
      const std::size_t lo = std::min({p, pp, qp});
      const bool sorted = p <= pp && pp <= qp;
      const Key key{hi, n - lo, !sorted, p, pp};
      if (!found || key < best_key) {
        best_key = key;
        best = Factorization{p, q, pp, qp, false};
        found = true;
      }
    }
  }
  best.degenerate = n > 1 && std::min({best.P, best.Pp, best.Qp}) == 1;
  return best;
}

void AttentionConfig::validate() const {
  if (channels == 0 || reduction == 0) throw ContractError("attention channels and reduction must be positive");
  if (channels % reduction)
    throw ContractError("channel count " + std::to_string(channels) + " not divisible by reduction " +
                        std::to_string(reduction));
  if (P == 0 || Q == 0 || Pp == 0 || Qp == 0) throw FactorizationError("attention factors must be >= 1");
  if (P * Q != positions)
    throw FactorizationError("P·Q = " + std::to_string(P * Q) + " does not equal N = " + std::to_string(positions));
  if (Pp * Qp != Q)
    throw FactorizationError("Pp·Qp = " + std::to_string(Pp * Qp) + " does not equal Q = " + std::to_string(Q));
}

AttentionConfig AttentionConfig::for_positions(std::size_t positions, std::size_t channels, std::size_t reduction) {
  const Factorization f = choose_factorization(positions);
  AttentionConfig cfg{channels, reduction, positions, f.P, f.Q, f.Pp, f.Qp};
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Permutations

Permutation::Permutation(std::vector<std::size_t> forward) : forward_(std::move(forward)) {
  const std::size_t n = forward_.size();
  inverse_.assign(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = forward_[j];
    if (src >= n || inverse_[src] != n) throw ContractError("permutation is not a bijection");
    inverse_[src] = j;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> f(n);
  std::iota(f.begin(), f.end(), std::size_t{0});
  return Permutation(std::move(f));
}

Permutation Permutation::inverted() const { return Permutation(inverse_); }

bool Permutation::is_identity() const {
  for (std::size_t j = 0; j < forward_.size(); ++j)
    if (forward_[j] != j) return false;
  return true;
}

Permutation Permutation::then(const Permutation& next) const {
  if (next.size() != size()) throw DimensionError("cannot compose permutations of different lengths");
  std::vector<std::size_t> f(size());
  for (std::size_t j = 0; j < size(); ++j) f[j] = forward_[next.forward_[j]];
  return Permutation(std::move(f));
}

Permutation interlace_permutation(std::size_t n, std::size_t p) {
  if (p == 0 || n % p)
    throw FactorizationError("part count " + std::to_string(p) + " does not divide " + std::to_string(n));
  const std::size_t per = n / p;
  std::vector<std::size_t> f(n);
  for (std::size_t g = 0; g < p; ++g)
    for (std::size_t j = 0; j < per; ++j) f[g * per + j] = g + j * p;
  return Permutation(std::move(f));
}

Permutation blockwise_interlace(std::size_t n, std::size_t block, std::size_t p) {
  if (block == 0 || n % block)
    throw FactorizationError("block " + std::to_string(block) + " does not divide " + std::to_string(n));
  const Permutation inner = interlace_permutation(block, p);
  std::vector<std::size_t> f(n);
  for (std::size_t b = 0; b < n / block; ++b)
    for (std::size_t j = 0; j < block; ++j) f[b * block + j] = b * block + inner.forward()[j];
  return Permutation(std::move(f));
}

namespace {

template <class T>
TensorT<T> gather_columns(const TensorT<T>& x, const std::vector<std::size_t>& order) {
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  TensorT<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = x.data().data() + r * cols;
    T* dst = out.data().data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) dst[j] = src[order[j]];
  }
  return out;
}

template <class T>
void check_positions(const TensorT<T>& x, std::size_t n, const char* what) {
  if (x.rank() != 2 || x.dim(1) != n)
    throw DimensionError(std::string(what) + ": expected C×" + std::to_string(n) + " input, got " +
                         shape_str(x.shape()));
}

}  // namespace

template <class T>
TensorT<T> apply_permutation(const TensorT<T>& x, const Permutation& perm) {
  check_positions(x, perm.size(), "apply_permutation");
  return gather_columns(x, perm.forward());
}

// ---------------------------------------------------------------------------
// Weights and groupings

template <class T>
void AttentionWeights<T>::validate(std::size_t c) const {
  if (wf.rank() != 2 || wf.dim(1) != c)
    throw DimensionError("W_f must be d×" + std::to_string(c) + ", got " + shape_str(wf.shape()));
  const std::size_t d = wf.dim(0);
  const Shape proj{d, c}, back{c, d};
  if (wg.shape() != proj || wh.shape() != proj || wv.shape() != back)
    throw DimensionError("attention weights inconsistent: W_f " + shape_str(wf.shape()) + ", W_g " +
                         shape_str(wg.shape()) + ", W_h " + shape_str(wh.shape()) + ", W_v " +
                         shape_str(wv.shape()));
}

template <class T>
AttentionWeights<T> AttentionWeights<T>::random(std::size_t c, std::size_t d, std::uint64_t seed) {
  const double sc = 1.0 / std::sqrt(static_cast<double>(c));
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  return {seeded_normal<T>({d, c}, derive_seed(seed, 0), sc), seeded_normal<T>({d, c}, derive_seed(seed, 1), sc),
          seeded_normal<T>({d, c}, derive_seed(seed, 2), sc), seeded_normal<T>({c, d}, derive_seed(seed, 3), sd)};
}

Grouping Grouping::long_range(std::size_t n, std::size_t parts) {
  Permutation perm = interlace_permutation(n, parts);
  return Grouping{GroupMode::long_range, parts, n / parts, std::move(perm)};
}

Grouping Grouping::short_range(std::size_t n, std::size_t group_size) {
  if (group_size == 0 || n % group_size)
    throw FactorizationError("group size " + std::to_string(group_size) + " does not divide " + std::to_string(n));
  return Grouping{GroupMode::short_range, n / group_size, group_size, Permutation::identity(n)};
}

Grouping Grouping::nested_long_range(std::size_t n, std::size_t outer_parts, std::size_t inner_parts) {
  const Permutation level1 = interlace_permutation(n, outer_parts);
  const Permutation inner = blockwise_interlace(n, n / outer_parts, inner_parts);
  if (n % (outer_parts * inner_parts))
    throw FactorizationError("nested grouping " + std::to_string(outer_parts) + "·" + std::to_string(inner_parts) +
                             " does not divide " + std::to_string(n));
  return Grouping{GroupMode::long_range, outer_parts * inner_parts, n / (outer_parts * inner_parts),
                  level1.then(inner)};
}

DalStages dal_stages(const AttentionConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.positions;
  DalStages s;
  s.level1 = interlace_permutation(n, cfg.P);
  s.inner_long = Grouping{GroupMode::long_range, cfg.P * cfg.Pp, cfg.Qp, blockwise_interlace(n, cfg.Q, cfg.Pp)};
  s.inner_short = Grouping::short_range(n, cfg.Pp);
  s.outer_short = Grouping::short_range(n, cfg.P);
  return s;
}

std::array<Grouping, 3> DalStages::in_input_frame() const {
  Grouping ll = inner_long;
  ll.perm = level1.then(inner_long.perm);
  Grouping ls = inner_short;
  ls.perm = level1;
  return {ll, ls, outer_short};
}

// ---------------------------------------------------------------------------
// Untaped forward

namespace {

void check_grouping(const Grouping& g, std::size_t n) {
  if (g.perm.size() != n || g.positions() != n)
    throw FactorizationError("grouping covers " + std::to_string(g.positions()) + " positions (permutation of " +
                             std::to_string(g.perm.size()) + ") but input has " + std::to_string(n));
}

}  // namespace

template <class T>
TensorT<T> grouped_attention(const TensorT<T>& x, const Grouping& g, const AttentionWeights<T>& w) {
  if (x.rank() != 2) throw DimensionError("grouped_attention expects C×N, got " + shape_str(x.shape()));
  w.validate(x.dim(0));
  check_grouping(g, x.dim(1));
  const bool permute = !g.perm.is_identity();
  const TensorT<T> xp = permute ? gather_columns(x, g.perm.forward()) : x;
  const TensorT<T> f = matmul(w.wf, xp);
  const TensorT<T> gg = matmul(w.wg, xp);
  const TensorT<T> h = matmul(w.wh, xp);
  TensorT<T> mixed;
  block_mix_forward(f, gg, h, g.group_size, T(1) / std::sqrt(static_cast<T>(w.key_dim())), mixed,
                    static_cast<std::vector<T>*>(nullptr));
  TensorT<T> z = matmul(w.wv, mixed);
  return permute ? gather_columns(z, g.perm.inverse()) : z;
}

template <class T>
TensorT<T> block_attention(const TensorT<T>& x, const AttentionWeights<T>& w) {
  if (x.rank() != 2) throw DimensionError("block_attention expects C×q, got " + shape_str(x.shape()));
  return grouped_attention(x, Grouping::short_range(x.dim(1), x.dim(1)), w);
}

template <class T>
TensorT<T> dense_self_attention(const TensorT<T>& x, const AttentionWeights<T>& w) {
  return block_attention(x, w);
}

template <class T>
TensorT<T> dal_forward(const TensorT<T>& x, const AttentionConfig& cfg, const AttentionWeights<T>& inner_long,
                       const AttentionWeights<T>& inner_short, const AttentionWeights<T>& outer_short) {
  const DalStages st = dal_stages(cfg);
  check_positions(x, cfg.positions, "dal_forward");
  if (x.dim(0) != cfg.channels)
    throw DimensionError("dal_forward: config expects " + std::to_string(cfg.channels) + " channels, input is " +
                         shape_str(x.shape()));
  const TensorT<T> xl = gather_columns(x, st.level1.forward());
  const TensorT<T> z_ll = grouped_attention(xl, st.inner_long, inner_long);
  const TensorT<T> z_ls = grouped_attention(z_ll, st.inner_short, inner_short);
  const TensorT<T> z_l = gather_columns(z_ls, st.level1.inverse());
  return grouped_attention(z_l, st.outer_short, outer_short);
}

// ---------------------------------------------------------------------------
// Taped forward

template <class T>
AttentionVars<T> bind_weights(Tape<T>& tape, const AttentionWeights<T>& w, bool track) {
  auto bind = [&](const TensorT<T>& v) { return track ? tape.input(v) : tape.constant(v); };
  return {bind(w.wf), bind(w.wg), bind(w.wh), bind(w.wv)};
}

namespace ag {

template <class T>
Var<T> grouped_attention(const Var<T>& x, const Grouping& g, const AttentionVars<T>& w) {
  if (x.value().rank() != 2) throw DimensionError("grouped_attention expects C×N, got " + shape_str(x.shape()));
  const AttentionWeights<T> shapes_only{w.wf.value(), w.wg.value(), w.wh.value(), w.wv.value()};
  shapes_only.validate(x.value().dim(0));
  check_grouping(g, x.value().dim(1));
  const bool permute = !g.perm.is_identity();
  const Var<T> xp = permute ? gather_cols(x, std::span<const std::size_t>(g.perm.forward())) : x;
  const Var<T> f = matmul(w.wf, xp);
  const Var<T> gg = matmul(w.wg, xp);
  const Var<T> h = matmul(w.wh, xp);
  const T scale = T(1) / std::sqrt(static_cast<T>(w.wf.value().dim(0)));
  const Var<T> z = matmul(w.wv, block_mix(f, gg, h, g.group_size, scale));
  return permute ? gather_cols(z, std::span<const std::size_t>(g.perm.inverse())) : z;
}

template <class T>
Var<T> dal_forward(const Var<T>& x, const AttentionConfig& cfg, const AttentionVars<T>& inner_long,
                   const AttentionVars<T>& inner_short, const AttentionVars<T>& outer_short) {
  const DalStages st = dal_stages(cfg);
  check_positions(x.value(), cfg.positions, "dal_forward");
  const Var<T> xl = gather_cols(x, std::span<const std::size_t>(st.level1.forward()));
  const Var<T> z_ll = grouped_attention(xl, st.inner_long, inner_long);
  const Var<T> z_ls = grouped_attention(z_ll, st.inner_short, inner_short);
  const Var<T> z_l = gather_cols(z_ls, std::span<const std::size_t>(st.level1.inverse()));
  return grouped_attention(z_l, st.outer_short, outer_short);
}

}  // namespace ag

// ---------------------------------------------------------------------------
// Effective affinities

template <class T>
TensorT<T> stage_affinity(const TensorT<T>& x, const Grouping& g, const AttentionWeights<T>& w,
                          std::size_t max_positions, SoftmaxAxis axis) {
  if (x.rank() != 2) throw DimensionError("stage_affinity expects C×N, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(1);
  if (n > max_positions)
    throw VerificationSizeError("effective affinity for N = " + std::to_string(n) + " exceeds bound " +
                                std::to_string(max_positions));
  w.validate(x.dim(0));
  check_grouping(g, n);
  const TensorT<T> xp = gather_columns(x, g.perm.forward());
  const TensorT<T> f = matmul(w.wf, xp);
  const TensorT<T> gg = matmul(w.wg, xp);
  const std::size_t d = f.dim(0), q = g.group_size;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  TensorT<T> eff({n, n});
  TensorT<T> logits({q, q});
  for (std::size_t grp = 0; grp < g.parts; ++grp) {
    const std::size_t s = grp * q;
    for (std::size_t p = 0; p < q; ++p)
      for (std::size_t j = 0; j < q; ++j) {
        T acc = 0;
        for (std::size_t k = 0; k < d; ++k) acc += f.at(k, s + p) * gg.at(k, s + j);
        logits.at(p, j) = acc * scale;
      }
    const TensorT<T> a =
        axis == SoftmaxAxis::columns ? softmax_cols(logits) : transpose(softmax_cols(transpose(logits)));
    for (std::size_t p = 0; p < q; ++p)
      for (std::size_t j = 0; j < q; ++j) eff.at(g.perm.forward()[s + p], g.perm.forward()[s + j]) = a.at(p, j);
  }
  return eff;
}

template <class T>
EffectiveAffinity<T> effective_affinity(const TensorT<T>& x, const AttentionConfig& cfg,
                                        const AttentionWeights<T>& inner_long,
                                        const AttentionWeights<T>& inner_short,
                                        const AttentionWeights<T>& outer_short, std::size_t max_positions,
                                        SoftmaxAxis axis) {
  if (cfg.positions > max_positions)
    throw VerificationSizeError("effective affinity for N = " + std::to_string(cfg.positions) + " exceeds bound " +
                                std::to_string(max_positions));
  check_positions(x, cfg.positions, "effective_affinity");
  const auto stages = dal_stages(cfg).in_input_frame();
  const std::array<const AttentionWeights<T>*, 3> weights{&inner_long, &inner_short, &outer_short};
  EffectiveAffinity<T> out;
  TensorT<T> cur = x;
  for (std::size_t i = 0; i < 3; ++i) {
    out.stages[i] = stage_affinity(cur, stages[i], *weights[i], max_positions, axis);
    if (i < 2) cur = grouped_attention(cur, stages[i], *weights[i]);
  }
  out.product = matmul(matmul(out.stages[0], out.stages[1]), out.stages[2]);
  TensorT<T> chain = matmul(inner_long.wv, inner_long.wh);
  chain = matmul(matmul(inner_short.wv, inner_short.wh), chain);
  out.channel_map = matmul(matmul(outer_short.wv, outer_short.wh), chain);
  return out;
}

// ---------------------------------------------------------------------------
// Cost model

std::string to_string(AttentionScheme s) {
  switch (s) {
    case AttentionScheme::dense: return "dense";
    case AttentionScheme::interlaced: return "interlaced";
    case AttentionScheme::dal: return "dal";
  }
  return "?";
}

AttentionScheme parse_scheme(const std::string& s) {
  if (s == "dense") return AttentionScheme::dense;
  if (s == "interlaced") return AttentionScheme::interlaced;
  if (s == "dal") return AttentionScheme::dal;
  throw ContractError("unknown attention scheme '" + s + "'");
}

namespace {

// Exact integer root when n is a perfect power, floating otherwise.
double root_of(std::size_t n, int degree) {
  const double approx = degree == 2 ? std::sqrt(static_cast<double>(n)) : std::cbrt(static_cast<double>(n));
  const auto r = static_cast<std::size_t>(std::llround(approx));
  std::size_t pw = 1;
  for (int i = 0; i < degree; ++i) pw *= r;
  return pw == n ? static_cast<double>(r) : approx;
}

}  // namespace

double flops_estimate(std::size_t h, std::size_t w, std::size_t c, std::size_t k, AttentionScheme scheme) {
  if (h == 0 || w == 0 || c == 0 || k == 0) throw ContractError("flops_estimate arguments must be positive");
  if (c % k) throw ContractError("flops_estimate: k = " + std::to_string(k) + " does not divide C = " + std::to_string(c));
  const std::size_t n = h * w;
  const double nd = static_cast<double>(n);
  const double proj = nd * static_cast<double>(c * c / k);
  const double ck = static_cast<double>(c / k);
  switch (scheme) {
    case AttentionScheme::dense: return 4 * proj + 2 * nd * nd * ck;
    case AttentionScheme::interlaced: return 4 * proj + 3 * nd * root_of(n, 2) * ck;
    case AttentionScheme::dal: return 12 * proj + 6 * nd * root_of(n, 3) * ck;
  }
  return 0;
}

#define DAN_INSTANTIATE(T)                                                                                        \
  template struct AttentionWeights<T>;                                                                            \
  template TensorT<T> apply_permutation<T>(const TensorT<T>&, const Permutation&);                                \
  template TensorT<T> block_attention<T>(const TensorT<T>&, const AttentionWeights<T>&);                          \
  template TensorT<T> grouped_attention<T>(const TensorT<T>&, const Grouping&, const AttentionWeights<T>&);       \
  template TensorT<T> dense_self_attention<T>(const TensorT<T>&, const AttentionWeights<T>&);                     \
  template TensorT<T> dal_forward<T>(const TensorT<T>&, const AttentionConfig&, const AttentionWeights<T>&,       \
                                     const AttentionWeights<T>&, const AttentionWeights<T>&);                     \
  template AttentionVars<T> bind_weights<T>(Tape<T>&, const AttentionWeights<T>&, bool);                          \
  template Var<T> ag::grouped_attention<T>(const Var<T>&, const Grouping&, const AttentionVars<T>&);              \
  template Var<T> ag::dal_forward<T>(const Var<T>&, const AttentionConfig&, const AttentionVars<T>&,              \
                                     const AttentionVars<T>&, const AttentionVars<T>&);                           \
  template TensorT<T> stage_affinity<T>(const TensorT<T>&, const Grouping&, const AttentionWeights<T>&,           \
                                        std::size_t, SoftmaxAxis);                                                \
  template EffectiveAffinity<T> effective_affinity<T>(const TensorT<T>&, const AttentionConfig&,                  \
                                                      const AttentionWeights<T>&, const AttentionWeights<T>&,     \
                                                      const AttentionWeights<T>&, std::size_t, SoftmaxAxis);

DAN_INSTANTIATE(float)
DAN_INSTANTIATE(double)

#undef DAN_INSTANTIATE

}  // namespace dan
