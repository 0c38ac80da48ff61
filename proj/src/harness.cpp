#include "dan/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "dan/losses.hpp"
#include "dan/rng.hpp"
#include "dan/trainer.hpp"

namespace dan {

// ---------------------------------------------------------------------------
// Benchmark

std::pair<std::size_t, std::size_t> interlaced_factors(std::size_t n) {
  if (n == 0) throw ContractError("interlaced factorization of 0 positions");
  std::size_t p = 1;
  for (std::size_t f = 1; f * f <= n; ++f)
    if (n % f == 0) p = f;
  return {p, n / p};
}

double fit_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("slope fit needs at least two paired points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw ContractError("slope fit needs positive values");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw ContractError("slope fit needs at least two distinct sizes");
  return sxy / sxx;
}

BenchReport bench_attention_scaling(const std::vector<std::size_t>& sizes, std::size_t channels, std::size_t k,
                                    const std::vector<AttentionScheme>& schemes, std::size_t dense_cap) {
  if (channels == 0 || k == 0 || channels % k) throw ContractError("channels must be a positive multiple of k");
  const std::size_t d = channels / k;
  BenchReport report;
  for (auto scheme : schemes) {
    std::vector<double> xs, ys;
    for (auto n : sizes) {
      if (scheme == AttentionScheme::dense && n > dense_cap) {
        report.skipped.push_back(to_string(scheme) + " N=" + std::to_string(n));
        continue;
      }
      const Tensor x = seeded_normal<float>({channels, n}, derive_seed(0xBE4C, n), 1.0);
      std::array<AttentionWeights<float>, 3> w;
      for (std::size_t i = 0; i < 3; ++i) w[i] = AttentionWeights<float>::random(channels, d, derive_seed(0xBE4D, i));
      std::size_t stages = 1;
      std::uint64_t macs = 0;
      const auto t0 = std::chrono::steady_clock::now();
      {
        MacCountScope scope(macs);
        switch (scheme) {
          case AttentionScheme::dense:
            (void)dense_self_attention(x, w[0]);
            break;
          case AttentionScheme::interlaced: {
            const auto [p, q] = interlaced_factors(n);
            const Tensor z = grouped_attention(x, Grouping::long_range(n, p), w[0]);
            (void)grouped_attention(z, Grouping::short_range(n, p), w[1]);
            stages = 2;
            break;
          }
          case AttentionScheme::dal: {
            const auto cfg = AttentionConfig::for_positions(n, channels, k);
            if (choose_factorization(n).degenerate)
              throw FactorizationError("N = " + std::to_string(n) + " has no non-degenerate factorization");
            (void)dal_forward(x, cfg, w[0], w[1], w[2]);
            stages = 3;
            break;
          }
        }
      }
      const auto t1 = std::chrono::steady_clock::now();
      BenchRecord r;
      r.scheme = scheme;
      r.n = n;
      r.c = channels;
      r.k = k;
      r.measured_macs = macs;
      r.projection_macs = static_cast<std::uint64_t>(stages) * 4 * n * channels * d;
      r.attention_macs = macs - std::min(macs, r.projection_macs);
      r.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
      r.predicted = flops_estimate(1, n, channels, k, scheme);
      report.records.push_back(r);
      xs.push_back(static_cast<double>(n));
      ys.push_back(static_cast<double>(r.attention_macs));
    }
    if (xs.size() >= 2) report.fits.push_back({scheme, fit_log_slope(xs, ys), xs.size()});
  }
  return report;
}

void write_bench_csv(std::ostream& out, const BenchReport& report) {
  out << "scheme,n,c,k,measured_macs,projection_macs,attention_macs,predicted_flops,wall_seconds\n";
  for (const auto& r : report.records)
    out << to_string(r.scheme) << ',' << r.n << ',' << r.c << ',' << r.k << ',' << r.measured_macs << ','
        << r.projection_macs << ',' << r.attention_macs << ',' << std::setprecision(17) << r.predicted << ','
        << std::setprecision(6) << r.wall_seconds << '\n';
}

// ---------------------------------------------------------------------------
// Gradient checks

namespace {

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t max_elements) {
  std::vector<std::size_t> idx;
  if (max_elements == 0 || max_elements >= n) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
  } else {
    for (std::size_t i = 0; i < max_elements; ++i) idx.push_back(i * n / max_elements);
  }
  return idx;
}

double rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0, ref = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    ref += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

}  // namespace

std::vector<GradCheckEntry> check_gradients(ParameterStore<double>& store,
                                            const std::function<Var<double>(Binding<double>&)>& loss, double eps,
                                            std::size_t max_elements) {
  {
    Tape<double> tape;
    Binding<double> b(tape, store);
    Var<double> l = loss(b);
    store.zero_grad();
    tape.backward(l);
  }
  auto evaluate = [&] {
    Tape<double> tape(false);
    Binding<double> b(tape, store, false);
    return loss(b).value().item();
  };
  std::vector<GradCheckEntry> out;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    const auto idx = sample_indices(p.value.size(), max_elements);
    std::vector<double> analytic, numeric;
    for (auto j : idx) {
      const double v = p.value[j];
      p.value[j] = v + eps;
      const double lp = evaluate();
      p.value[j] = v - eps;
      const double lm = evaluate();
      p.value[j] = v;
      numeric.push_back((lp - lm) / (2 * eps));
      analytic.push_back(p.grad[j]);
    }
    out.push_back({p.name, idx.size(), rel_error(analytic, numeric)});
  }
  return out;
}

GradCheckEntry check_input_gradient(const TensorT<double>& x,
                                    const std::function<Var<double>(Tape<double>&, const Var<double>&)>& loss,
                                    double eps, std::size_t max_elements) {
  TensorT<double> g;
  {
    Tape<double> tape;
    Var<double> xv = tape.input(x);
    tape.backward(loss(tape, xv));
    g = tape.grad(xv);
  }
  TensorT<double> probe = x;
  auto evaluate = [&] {
    Tape<double> tape(false);
    return loss(tape, tape.constant(probe)).value().item();
  };
  const auto idx = sample_indices(x.size(), max_elements);
  std::vector<double> analytic, numeric;
  for (auto j : idx) {
    const double v = probe[j];
    probe[j] = v + eps;
    const double lp = evaluate();
    probe[j] = v - eps;
    const double lm = evaluate();
    probe[j] = v;
    numeric.push_back((lp - lm) / (2 * eps));
    analytic.push_back(g[j]);
  }
  return {"input", idx.size(), rel_error(analytic, numeric)};
}

// ---------------------------------------------------------------------------
// Verification suite

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}


using CheckFn = std::function<CheckResult(const VerifyOptions&)>;

struct NamedCheck {
  const char* name;
  CheckFn run;
};

CheckResult result(const char* name, bool pass, double measured, double tol, std::string detail = {}) {
  return {name, pass, measured, tol, std::move(detail)};
}

CheckResult check_oracle(const VerifyOptions& o) {
  CounterRng rng(o.seed, 1);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = 2 * (1 + rng.next_below(4));
    const std::size_t n = 1 + rng.next_below(64);
    const Tensor x = seeded_normal<float>({c, n}, derive_seed(o.seed, t, 1), 1.0);
    const auto w = AttentionWeights<float>::random(c, c / 2, derive_seed(o.seed, t, 2));
    const Tensor a = grouped_attention(x, Grouping::long_range(n, 1), w);
    const Tensor b = dense_self_attention(x, w);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
  }
  return result("oracle.grouped_vs_dense", worst < 1e-6, worst, 1e-6, "100 instances, C<=8, N<=64");
}

CheckResult check_block_diagonal(const VerifyOptions& o) {
  double off = 0, min_on = 1;
  std::size_t cases = 0;
  for (std::size_t n : {16u, 48u, 64u, 128u, 256u})
    for (std::size_t p : {2u, 4u, 8u}) {
      if (n % p) continue;
      const Tensor64 x = seeded_normal<double>({4, n}, derive_seed(o.seed, n, p), 1.0);
      const auto w = AttentionWeights<double>::random(4, 2, derive_seed(o.seed, p, 7));
      const Tensor64 e = stage_affinity(x, Grouping::long_range(n, p), w, 4096, o.softmax_axis);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (i % p == j % p)
            min_on = std::min(min_on, e.at(i, j));
          else
            off = std::max(off, std::abs(e.at(i, j)));
        }
      ++cases;
    }
  return result("jacobian.long_range_block_diagonal", off == 0 && min_on > 0, off, 0,
                std::to_string(cases) + " (N, P) cases; smallest in-block weight " + fmt(min_on));
}

CheckResult check_coverage(const VerifyOptions& o) {
  const std::size_t n = 27, c = 4;
  const auto cfg = AttentionConfig::for_positions(n, c, 2);
  std::array<AttentionWeights<double>, 3> w;
  for (std::size_t i = 0; i < 3; ++i) w[i] = AttentionWeights<double>::random(c, 2, derive_seed(o.seed, i, 27));
  Tensor64 x = seeded_normal<double>({c, n}, derive_seed(o.seed, 3, 27), 1.0);
  const double eps = 1e-6;
  Tensor64 block({n, n});  // max |∂out(:, j) / ∂x(:, i)|
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x.at(ci, i);
      x.at(ci, i) = v + eps;
      const Tensor64 yp = dal_forward(x, cfg, w[0], w[1], w[2]);
      x.at(ci, i) = v - eps;
      const Tensor64 ym = dal_forward(x, cfg, w[0], w[1], w[2]);
      x.at(ci, i) = v;
      for (std::size_t co = 0; co < c; ++co)
        for (std::size_t j = 0; j < n; ++j)
          block.at(i, j) = std::max(block.at(i, j), std::abs(yp.at(co, j) - ym.at(co, j)) / (2 * eps));
    }
  double min_block = std::numeric_limits<double>::infinity();
  for (auto v : block.storage()) min_block = std::min(min_block, v);
  return result("jacobian.dal_full_coverage", min_block > 1e-12, min_block, 1e-12,
                "smallest position-pair Jacobian block, N=27");
}

CheckResult check_stochastic(const VerifyOptions& o) {
  const std::size_t n = 64, c = 4;
  const auto cfg = AttentionConfig::for_positions(n, c, 2);
  std::array<AttentionWeights<double>, 3> w;
  for (std::size_t i = 0; i < 3; ++i) w[i] = AttentionWeights<double>::random(c, 2, derive_seed(o.seed, i, 64));
  const Tensor64 x = seeded_normal<double>({c, n}, derive_seed(o.seed, 5, 64), 1.0);
  const auto eff = effective_affinity(x, cfg, w[0], w[1], w[2], 4096, o.softmax_axis);
  double worst = 0;
  for (const Tensor64* m : {&eff.stages[0], &eff.stages[1], &eff.stages[2], &eff.product})
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += m->at(i, j);
      worst = std::max(worst, std::abs(s - 1));
    }
  return result("stochasticity.affinity_columns", worst <= 1e-5, worst, 1e-5, "max |column sum - 1|");
}

CheckResult check_dense_product(const VerifyOptions& o) {
  const std::size_t n = 64, c = 4;
  const auto cfg = AttentionConfig::for_positions(n, c, 2);
  std::array<AttentionWeights<double>, 3> w;
  for (std::size_t i = 0; i < 3; ++i) w[i] = AttentionWeights<double>::random(c, 2, derive_seed(o.seed, i, 65));
  const Tensor64 x = seeded_normal<double>({c, n}, derive_seed(o.seed, 6, 64), 1.0);
  const auto eff = effective_affinity(x, cfg, w[0], w[1], w[2]);
  double lo = std::numeric_limits<double>::infinity();
  for (auto v : eff.product.storage()) lo = std::min(lo, v);
  const Tensor64 direct = dal_forward(x, cfg, w[0], w[1], w[2]);
  const Tensor64 rebuilt = matmul(matmul(eff.channel_map, x), eff.product);
  double diff = 0;
  for (std::size_t i = 0; i < direct.size(); ++i) diff = std::max(diff, std::abs(direct[i] - rebuilt[i]));
  return result("coverage.effective_affinity_positive", lo > 0 && diff < 1e-10, lo, 0,
                "min product entry; frozen-affinity reconstruction error " + fmt(diff));
}

CheckResult check_dal_gradient(const VerifyOptions& o) {
  const std::size_t n = 16, c = 4;
  const auto cfg = AttentionConfig::for_positions(n, c, 2);
  ParameterStore<double> store;
  for (const char* s : {"ll", "ls", "s"}) {
    auto w = AttentionWeights<double>::random(c, 2, derive_seed(o.seed, s[1], 16));
    store.add(std::string(s) + ".wf", w.wf);
    store.add(std::string(s) + ".wg", w.wg);
    store.add(std::string(s) + ".wh", w.wh);
    store.add(std::string(s) + ".wv", w.wv);
  }
  const Tensor64 x = seeded_normal<double>({c, n}, derive_seed(o.seed, 9, 16), 1.0);
  const Tensor64 probe = seeded_normal<double>({c, n}, derive_seed(o.seed, 10, 16), 1.0);
  auto loss = [&](Binding<double>& b) {
    auto& t = b.tape();
    Var<double> y = ag::dal_forward(t.constant(x), cfg, b.attention("ll"), b.attention("ls"), b.attention("s"));
    return ag::sum(ag::mul(y, t.constant(probe)));
  };
  double worst = 0;
  for (const auto& e : check_gradients(store, loss)) worst = std::max(worst, e.rel_error);
  return result("gradient.dal_forward", worst < 1e-4, worst, 1e-4, "max relative error over weight groups");
}

CheckResult check_loss_gradient(const VerifyOptions& o) {
  const Tensor64 pred = seeded_normal<double>({1, 8, 8}, derive_seed(o.seed, 11), 0.2);
  const Tensor64 target = seeded_normal<double>({1, 8, 8}, derive_seed(o.seed, 12), 0.2);
  const PerceptualStack<double> stack;
  auto e = check_input_gradient(pred, [&](Tape<double>& t, const Var<double>& p) {
    return ag::total_loss(p, t.constant(target), LossWeights{}, stack).total;
  });
  return result("gradient.total_loss", e.rel_error < 1e-4, e.rel_error, 1e-4, "8x8 prediction");
}

CheckResult check_pgm(const VerifyOptions& o) {
  CounterRng rng(o.seed, 13);
  ImageU8 img(13, 7);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.next_below(256));
  const auto bytes = write_pgm(img);
  const bool ok = read_pgm(bytes) == img && write_pgm(read_pgm(bytes)) == bytes;
  return result("roundtrip.pgm", ok, ok ? 0 : 1, 0);
}

CheckResult check_checkpoint(const VerifyOptions& o) {
  ParameterStore<float> store;
  store.add("a", seeded_normal<float>({3, 4}, derive_seed(o.seed, 14), 1.0));
  store.add("b", seeded_normal<float>({2, 2, 3}, derive_seed(o.seed, 15), 1.0));
  const auto bytes = encode_checkpoint(store);
  const auto back = decode_checkpoint(bytes);
  const bool same = encode_checkpoint(back) == bytes && back.get("a").value == store.get("a").value &&
                    back.get("b").value == store.get("b").value;
  return result("roundtrip.checkpoint", same, same ? 0 : 1, 0);
}

CheckResult check_crc(const VerifyOptions& o) {
  ParameterStore<float> store;
  store.add("w", seeded_normal<float>({5}, derive_seed(o.seed, 16), 1.0));
  auto bytes = encode_checkpoint(store);
  bytes[bytes.size() - 8] ^= 0x01;
  bool rejected = false;
  try {
    (void)decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    rejected = e.kind() == CheckpointErrorKind::crc_mismatch;
  }
  return result("checkpoint.crc_rejects_corruption", rejected, rejected ? 0 : 1, 0);
}

CheckResult check_psnr(const VerifyOptions&) {
  ImageU8 a(16, 16, 100), b(16, 16, 101);
  const double v = psnr(a, b);
  return result("metric.psnr_gap1", std::abs(v - 48.1308) <= 1e-3, v, 1e-3, "expected 48.1308 dB");
}

CheckResult check_ssim(const VerifyOptions& o) {
  CounterRng rng(o.seed, 17);
  ImageU8 a(24, 24);
  for (auto& p : a.pixels) p = static_cast<std::uint8_t>(rng.next_below(256));
  const double v = ssim(a, a);
  return result("metric.ssim_identity", std::abs(v - 1) <= 1e-12, v, 1e-12, "expected 1");
}

CheckResult check_ie(const VerifyOptions&) {
  ImageU8 a(16, 16, 20), b(16, 16, 25);
  const double v = interp_error(a, b);
  return result("metric.ie_gap5", v == 5.0, v, 0, "expected 5 exactly");
}

CheckResult check_zero_loss(const VerifyOptions& o) {
  const Tensor t = seeded_normal<float>({1, 16, 16}, derive_seed(o.seed, 18), 0.3);
  const PerceptualStack<float> stack;
  const double v = total_loss(t, t, LossWeights{}, stack);
  return result("loss.total_zero_at_target", v == 0, v, 0);
}

CheckResult check_factorization(const VerifyOptions&) {
  struct Case {
    std::size_t n, p, q, pp, qp;
  };
  std::size_t bad = 0;
  for (const Case& c : {Case{64, 4, 16, 4, 4}, Case{729, 9, 81, 9, 9}, Case{4096, 16, 256, 16, 16}}) {
    const auto f = choose_factorization(c.n);
    if (f.P != c.p || f.Q != c.q || f.Pp != c.pp || f.Qp != c.qp) ++bad;
  }
  return result("factorization.examples", bad == 0, static_cast<double>(bad), 0, "mismatching examples");
}

CheckResult check_flops(const VerifyOptions&) {
  const double i = flops_estimate(64, 64, 32, 2, AttentionScheme::interlaced);
  const double d = flops_estimate(64, 64, 32, 2, AttentionScheme::dal);
  const double err = std::max(std::abs(i - 20971520.0), std::abs(d - 31457280.0));
  return result("flops.closed_form", err == 0, err, 0, "64x64, C=32, k=2");
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.channels = 4;
  m.rdb_count = 2;
  m.convs_per_rdb = 2;
  m.growth = 4;
  m.reduction = 2;
  m.height = m.width = 4;
  return m;
}

CheckResult check_temporal_swap(const VerifyOptions& o) {
  const auto cfg = tiny_model();
  ParameterStore<float> store;
  init_srdn(store, cfg, o.seed);
  const Tensor a = seeded_normal<float>({1, 4, 4}, derive_seed(o.seed, 19), 0.3);
  const Tensor b = seeded_normal<float>({1, 4, 4}, derive_seed(o.seed, 20), 0.3);
  Tape<float> tape(false);
  Binding<float> bind(tape, store, false);
  const auto [f1, r1] = srdn_forward(bind, tape.constant(a), tape.constant(b), cfg);
  const auto [f2, r2] = srdn_forward(bind, tape.constant(b), tape.constant(a), cfg);
  const bool ok = f1.value() == r2.value() && r1.value() == f2.value();
  return result("model.temporal_swap", ok, ok ? 0 : 1, 0, "swapping inputs swaps the feature maps bitwise");
}

CheckResult check_rdb_identity(const VerifyOptions& o) {
  const auto cfg = tiny_model();
  ParameterStore<float> store;
  init_srdn(store, cfg, o.seed);
  for (const auto& n : store.names_with_prefix("srdn.rdb0.")) store.get(n).value.fill(0);
  const Tensor f = seeded_normal<float>({4, 4, 4}, derive_seed(o.seed, 21), 1.0);
  Tape<float> tape(false);
  Binding<float> bind(tape, store, false);
  const bool ok = rdb_forward(bind, tape.constant(f), cfg, "srdn.rdb0").value() == f;
  return result("model.rdb_zero_identity", ok, ok ? 0 : 1, 0);
}

CheckResult check_output_range(const VerifyOptions& o) {
  auto cfg = tiny_model();
  auto store = init_dan<float>(cfg, o.seed);
  const Tensor a = seeded_normal<float>({1, 4, 4}, derive_seed(o.seed, 22), 0.3);
  const Tensor b = seeded_normal<float>({1, 4, 4}, derive_seed(o.seed, 23), 0.3);
  const Tensor y = interpolate(store, cfg, a, b);
  double lo = 1, hi = 0;
  for (auto v : y.storage()) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  return result("model.output_range", lo >= 0 && hi <= 1, std::max({0.0, -lo, hi - 1}), 0, "output within [0, 1]");
}

const std::vector<NamedCheck>& registry() {
  static const std::vector<NamedCheck> checks{
      {"oracle.grouped_vs_dense", check_oracle},
      {"jacobian.long_range_block_diagonal", check_block_diagonal},
      {"jacobian.dal_full_coverage", check_coverage},
      {"stochasticity.affinity_columns", check_stochastic},
      {"coverage.effective_affinity_positive", check_dense_product},
      {"gradient.dal_forward", check_dal_gradient},
      {"gradient.total_loss", check_loss_gradient},
      {"roundtrip.pgm", check_pgm},
      {"roundtrip.checkpoint", check_checkpoint},
      {"checkpoint.crc_rejects_corruption", check_crc},
      {"metric.psnr_gap1", check_psnr},
      {"metric.ssim_identity", check_ssim},
      {"metric.ie_gap5", check_ie},
      {"loss.total_zero_at_target", check_zero_loss},
      {"factorization.examples", check_factorization},
      {"flops.closed_form", check_flops},
      {"model.temporal_swap", check_temporal_swap},
      {"model.rdb_zero_identity", check_rdb_identity},
      {"model.output_range", check_output_range},
  };
  return checks;
}

}  // namespace

std::vector<std::string> verify_check_names() {
  std::vector<std::string> names;
  for (const auto& c : registry()) names.emplace_back(c.name);
  return names;
}

std::vector<CheckResult> verify_properties(const VerifyOptions& opts, std::ostream* jsonl) {
  std::vector<CheckResult> out;
  for (const auto& c : registry()) {
    if (!opts.filter.empty() && std::string(c.name).find(opts.filter) == std::string::npos) continue;
    CheckResult r;
    try {
      r = c.run(opts);
    } catch (const std::exception& e) {
      r = {c.name, false, std::numeric_limits<double>::quiet_NaN(), 0, std::string("exception: ") + e.what()};
    }
    if (jsonl) {
      nlohmann::json j{{"name", r.name}, {"status", r.pass ? "pass" : "fail"}, {"tolerance", r.tolerance}};
      j["measured"] = std::isfinite(r.measured) ? nlohmann::json(r.measured) : nlohmann::json(nullptr);
      if (!r.detail.empty()) j["detail"] = r.detail;
      *jsonl << j.dump() << '\n';
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

ImageU8 average_frames(const ImageU8& a, const ImageU8& b) {
  if (!a.same_size(b)) throw DimensionError("cannot average frames of different sizes");
  ImageU8 out(a.width, a.height);
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    out.pixels[i] = static_cast<std::uint8_t>((a.pixels[i] + b.pixels[i] + 1) / 2);
  return out;
}

ImageU8 interpolate_frames(ParameterStore<float>& params, const ImageU8& prev, const ImageU8& next) {
  if (!prev.same_size(next)) throw DimensionError("input frames differ in size");
  const ModelConfig cfg = infer_config(params, prev.height, prev.width);
  return to_image(interpolate(params, cfg, to_tensor<float>(prev), to_tensor<float>(next)));
}

namespace {

EvalRow score(ParameterStore<float>& params, const std::string& name, const Triplet& t) {
  EvalRow row{name, "ok", {}, {}};
  row.model = evaluate(interpolate_frames(params, t.prev, t.next), t.mid);
  row.baseline = evaluate(average_frames(t.prev, t.next), t.mid);
  return row;
}

void finish(EvalReport& report) {
  MetricReport m{0, 0, 0}, b{0, 0, 0};
  std::size_t n = 0;
  for (const auto& r : report.rows) {
    if (r.status != "ok") continue;
    m.psnr += r.model.psnr;
    m.ssim += r.model.ssim;
    m.ie += r.model.ie;
    b.psnr += r.baseline.psnr;
    b.ssim += r.baseline.ssim;
    b.ie += r.baseline.ie;
    ++n;
  }
  if (n == 0) return;
  const double k = static_cast<double>(n);
  report.mean_model = MetricReport{m.psnr / k, m.ssim / k, m.ie / k};
  report.mean_baseline = MetricReport{b.psnr / k, b.ssim / k, b.ie / k};
}

std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

EvalReport eval_triplets(ParameterStore<float>& params, const Dataset& data) {
  EvalReport report;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string name = i < data.names.size() ? data.names[i] : std::to_string(i);
    try {
      report.rows.push_back(score(params, name, data.triplets[i]));
    } catch (const Error& e) {
      report.rows.push_back({name, csv_safe(e.what()), {}, {}});
    }
  }
  finish(report);
  return report;
}

EvalReport eval_dataset(ParameterStore<float>& params, const std::filesystem::path& root) {
  EvalReport report;
  for (const auto& name : read_manifest(root)) {
    try {
      report.rows.push_back(score(params, name, load_triplet(root, name)));
    } catch (const Error& e) {
      report.rows.push_back({name, csv_safe(e.what()), {}, {}});
    }
  }
  finish(report);
  return report;
}

void write_eval_csv(std::ostream& out, const EvalReport& report) {
  out << "name,status,psnr,ssim,ie,baseline_psnr,baseline_ssim,baseline_ie\n";
  auto metrics = [&](const MetricReport& m) { out << ',' << m.psnr << ',' << m.ssim << ',' << m.ie; };
  out << std::setprecision(10);
  for (const auto& r : report.rows) {
    out << r.name << ',' << r.status;
    if (r.status == "ok") {
      metrics(r.model);
      metrics(r.baseline);
    } else {
      out << ",,,,,,";
    }
    out << '\n';
  }
  if (report.mean_model) {
    out << "mean,ok";
    metrics(*report.mean_model);
    metrics(*report.mean_baseline);
    out << '\n';
  }
}

}  // namespace dan
