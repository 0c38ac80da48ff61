// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is 0 only when every criterion passes, apart from ids named with --known-failure.
// Those still print FAIL but do not affect the exit status.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dan/harness.hpp"
#include "dan/rng.hpp"
#include "dan/trainer.hpp"

using namespace dan;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

// Explicit dense attention: every N×N matrix materialized, float throughout.
Tensor naive_dense(const Tensor& x, const AttentionWeights<float>& w) {
  const std::size_t c = x.dim(0), n = x.dim(1), d = w.wf.dim(0);
  auto project = [&](const Tensor& m, std::size_t rows) {
    Tensor out({rows, n});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) {
        float s = 0;
        for (std::size_t k = 0; k < c; ++k) s += m.at(r, k) * x.at(k, j);
        out.at(r, j) = s;
      }
    return out;
  };
  const Tensor f = project(w.wf, d), g = project(w.wg, d), h = project(w.wh, d);
  const float scale = 1.0f / std::sqrt(static_cast<float>(d));
  Tensor a({n, n});
  for (std::size_t q = 0; q < n; ++q) {
    float mx = -INFINITY;
    for (std::size_t p = 0; p < n; ++p) {
      float s = 0;
      for (std::size_t k = 0; k < d; ++k) s += f.at(k, p) * g.at(k, q);
      a.at(p, q) = s * scale;
      mx = std::max(mx, a.at(p, q));
    }
    float z = 0;
    for (std::size_t p = 0; p < n; ++p) z += (a.at(p, q) = std::exp(a.at(p, q) - mx));
    for (std::size_t p = 0; p < n; ++p) a.at(p, q) /= z;
  }
  Tensor mixed({d, n});
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t q = 0; q < n; ++q) {
      float s = 0;
      for (std::size_t p = 0; p < n; ++p) s += h.at(k, p) * a.at(p, q);
      mixed.at(k, q) = s;
    }
  Tensor out({c, n});
  for (std::size_t r = 0; r < c; ++r)
    for (std::size_t q = 0; q < n; ++q) {
      float s = 0;
      for (std::size_t k = 0; k < d; ++k) s += w.wv.at(r, k) * mixed.at(k, q);
      out.at(r, q) = s;
    }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

Outcome c1_oracle() {
  double worst = 0;
  std::size_t instances = 0;
  CounterRng rng(0xC1, 0);
  for (std::size_t i = 0; i < 120; ++i) {
    const std::size_t c = 2 * (1 + rng.next_below(4));  // 2..8
    const std::size_t d = c / 2;
    const std::size_t n = 1 + rng.next_below(64);
    const Tensor x = seeded_normal<float>({c, n}, derive_seed(0xC1, i, 1), 1.0);
    const auto w = AttentionWeights<float>::random(c, d, derive_seed(0xC1, i, 2));
    const Tensor ref = naive_dense(x, w);
    const Grouping single = (i % 2) ? Grouping::short_range(n, n) : Grouping::long_range(n, 1);
    worst = std::max(worst, max_abs_diff(grouped_attention(x, single, w), ref));
    worst = std::max(worst, max_abs_diff(dense_self_attention(x, w), ref));
    ++instances;
  }
  return {worst < 1e-6, std::to_string(instances) + " instances, max |diff| " + num(worst) + " (< 1e-6)"};
}

Outcome c2_block_diagonal() {
  std::size_t cases = 0, violations = 0;
  double min_in_block = 1;
  for (std::size_t n : {16, 24, 64, 120, 256})
    for (std::size_t p : {2, 4, 8}) {
      if (n % p) continue;
      for (std::uint64_t seed = 0; seed < 2; ++seed) {
        const Tensor x = seeded_normal<float>({8, n}, derive_seed(0xC2, n * 16 + p, seed), 1.0);
        const auto w = AttentionWeights<float>::random(8, 4, derive_seed(0xC2, p, seed + 7));
        const Tensor a = stage_affinity(x, Grouping::long_range(n, p), w, 256);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const float v = a.at(i, j);
            if (i % p == j % p)
              min_in_block = std::min(min_in_block, static_cast<double>(v));
            else if (v != 0.0f)
              ++violations;
          }
        ++cases;
      }
    }
  // The two-level layer's inner long stage: same residue mod P and same residue of i/P mod P'.
  for (std::size_t n : {64, 216}) {
    const auto cfg = AttentionConfig::for_positions(n, 8, 2);
    const auto stages = dal_stages(cfg).in_input_frame();
    const Tensor x = seeded_normal<float>({8, n}, derive_seed(0xC2, n, 99), 1.0);
    const auto w = AttentionWeights<float>::random(8, 4, derive_seed(0xC2, n, 98));
    const Tensor a = stage_affinity(x, stages[0], w, 256);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const bool same = i % cfg.P == j % cfg.P && (i / cfg.P) % cfg.Pp == (j / cfg.P) % cfg.Pp;
        if (same)
          min_in_block = std::min(min_in_block, static_cast<double>(a.at(i, j)));
        else if (a.at(i, j) != 0.0f)
          ++violations;
      }
    ++cases;
  }
  return {violations == 0 && min_in_block > 0,
          std::to_string(cases) + " cases, " + std::to_string(violations) + " nonzero off-block entries, min in-block " +
              num(min_in_block)};
}

Outcome c3_coverage() {
  double weakest = INFINITY;
  std::size_t runs = 0;
  for (std::size_t n : {27, 64})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const std::size_t c = 4;
      const auto cfg = AttentionConfig::for_positions(n, c, 2);
      std::array<AttentionWeights<double>, 3> w;
      for (std::size_t s = 0; s < 3; ++s)
        w[s] = AttentionWeights<double>::random(c, 2, derive_seed(0xC3, seed, s));
      const Tensor64 x = seeded_normal<double>({c, n}, derive_seed(0xC3, seed, 10 + n), 1.0);
      // block[i][j] = max over channel pairs of |∂ out(:, j) / ∂ x(:, i)|
      std::vector<double> block(n * n, 0.0);
      const double eps = 1e-5;
      for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < n; ++i) {
          Tensor64 xp = x, xm = x;
          xp.at(k, i) += eps;
          xm.at(k, i) -= eps;
          const Tensor64 yp = dal_forward(xp, cfg, w[0], w[1], w[2]);
          const Tensor64 ym = dal_forward(xm, cfg, w[0], w[1], w[2]);
          for (std::size_t r = 0; r < c; ++r)
            for (std::size_t j = 0; j < n; ++j) {
              const double dj = std::abs(yp.at(r, j) - ym.at(r, j)) / (2 * eps);
              block[i * n + j] = std::max(block[i * n + j], dj);
            }
        }
      for (double v : block) weakest = std::min(weakest, v);
      ++runs;
    }
  return {weakest > 1e-12, std::to_string(runs) + " Jacobians, weakest position-pair block " + num(weakest) +
                               " (> 1e-12)"};
}

Outcome c4_scaling() {
  const auto sparse = bench_attention_scaling({4096, 32768, 262144}, 32, 2,
                                              {AttentionScheme::interlaced, AttentionScheme::dal});
  const auto dense = bench_attention_scaling({1024, 4096, 16384}, 32, 2, {AttentionScheme::dense});
  double e_dal = 0, e_int = 0, e_dense = 0;
  for (const auto& f : sparse.fits) (f.scheme == AttentionScheme::dal ? e_dal : e_int) = f.exponent;
  for (const auto& f : dense.fits) e_dense = f.exponent;
  const bool pass = std::abs(e_dal - 1.33) <= 0.15 && std::abs(e_int - 1.5) <= 0.15 && std::abs(e_dense - 2.0) <= 0.05;
  return {pass, "dal " + num(e_dal) + " (1.33 ± 0.15), interlaced " + num(e_int) + " (1.50 ± 0.15), dense " +
                    num(e_dense) + " (2.00 ± 0.05)"};
}

ModelConfig small_model() {
  ModelConfig m;
  m.channels = 4;
  m.rdb_count = 2;
  m.convs_per_rdb = 2;
  m.growth = 4;
  m.reduction = 2;
  m.height = m.width = 8;
  return m;
}

Var<double> weighted_sum(const Var<double>& y, std::uint64_t seed) {
  return ag::sum(ag::mul(y, y.tape().constant(seeded_normal<double>(y.shape(), seed, 1.0))));
}

Outcome c5_gradients() {
  const ModelConfig cfg = small_model();
  double worst = 0;
  std::string worst_name;
  std::size_t groups = 0;
  auto take = [&](const std::vector<GradCheckEntry>& entries, const std::string& tag) {
    for (const auto& e : entries) {
      ++groups;
      if (e.rel_error >= worst) {
        worst = e.rel_error;
        worst_name = tag + ":" + e.name;
      }
    }
  };

  {
    ParameterStore<double> s;
    init_warp_head(s, cfg, 51, "w");
    const Tensor64 x = seeded_normal<double>({4, 64}, 52, 1.0);
    const auto att = cfg.attention();
    take(check_gradients(s, [&](Binding<double>& b) {
           return weighted_sum(ag::dal_forward(b.tape().constant(x), att, b.attention("w.ll"), b.attention("w.ls"),
                                               b.attention("w.s")), 53);
         }), "dal_forward");
    const auto in = check_input_gradient(x, [&](Tape<double>& t, const Var<double>& v) {
      const auto w = [&](const char* p) {
        return bind_weights(t, AttentionWeights<double>{s.get(std::string("w.") + p + ".wf").value,
                                                        s.get(std::string("w.") + p + ".wg").value,
                                                        s.get(std::string("w.") + p + ".wh").value,
                                                        s.get(std::string("w.") + p + ".wv").value},
                            false);
      };
      return weighted_sum(ag::dal_forward(v, att, w("ll"), w("ls"), w("s")), 53);
    });
    take({in}, "dal_forward");
  }
  {
    ParameterStore<double> s;
    init_srdn(s, cfg, 54);
    const Tensor64 a = seeded_normal<double>({1, 8, 8}, 55, 0.3), bb = seeded_normal<double>({1, 8, 8}, 56, 0.3);
    take(check_gradients(s, [&](Binding<double>& b) {
           auto [f, r] = srdn_forward(b, b.tape().constant(a), b.tape().constant(bb), cfg);
           return ag::add(weighted_sum(f, 57), weighted_sum(r, 58));
         }), "srdn_forward");
  }
  {
    ParameterStore<double> s;
    init_blendnet(s, 59);
    Tensor64 w0 = seeded_normal<double>({1, 8, 8}, 60, 1.0), w1 = seeded_normal<double>({1, 8, 8}, 61, 1.0);
    for (auto* t : {&w0, &w1})
      for (auto& v : t->storage()) v = 1 / (1 + std::exp(-v));
    take(check_gradients(s, [&](Binding<double>& b) {
           return weighted_sum(blendnet_forward(b, b.tape().constant(w0), b.tape().constant(w1)).frame, 62);
         }), "blendnet_forward");
  }
  {
    const PerceptualStack<double> stack;
    Tensor64 target = seeded_normal<double>({1, 8, 8}, 63, 1.0), pred = seeded_normal<double>({1, 8, 8}, 64, 1.0);
    for (auto* t : {&target, &pred})
      for (auto& v : t->storage()) v = 1 / (1 + std::exp(-v));
    take({check_input_gradient(pred, [&](Tape<double>& t, const Var<double>& p) {
           return ag::total_loss(p, t.constant(target), LossWeights{}, stack).total;
         })},
         "total_loss");
  }
  return {worst < 1e-4, std::to_string(groups) + " parameter groups, worst relative error " + num(worst) + " at " +
                            worst_name + " (< 1e-4)"};
}

Outcome c6_ground_truths() {
  const PerceptualStack<float> stack;
  const Tensor t = seeded_normal<float>({1, 16, 16}, 70, 0.2);
  const double zero = total_loss(t, t, LossWeights{}, stack);
  const double p = psnr(ImageU8(32, 32, 100), ImageU8(32, 32, 101));
  ImageU8 a(32, 32);
  CounterRng rng(71, 0);
  for (auto& v : a.pixels) v = static_cast<std::uint8_t>(rng.next_below(256));
  const double s = ssim(a, a);
  const double ie = interp_error(ImageU8(32, 32, 40), ImageU8(32, 32, 45));
  const bool pass = zero == 0 && std::abs(p - 48.1308) <= 1e-3 && s == 1.0 && ie == 5.0;
  return {pass, "total_loss(t, t) " + num(zero) + ", PSNR gap 1 " + num(p) + " dB, SSIM(a, a) " + num(s) +
                    ", IE gap 5 " + num(ie)};
}

// ---------------------------------------------------------------------------
// Desk-scale training runs shared by criteria 7–9.

struct RunArtifacts {
  fs::path dir;
  EvalReport report;
  double seconds = 0;
};

Dataset synthetic_set(const std::string& prefix, std::size_t count, std::uint64_t first_seed) {
  Dataset d;
  for (std::size_t i = 0; i < count; ++i) {
    d.names.push_back(prefix + std::to_string(i));
    d.triplets.push_back(make_synthetic_triplet(64, 64, first_seed + i, 4));
  }
  return d;
}

RunArtifacts train_and_eval(const fs::path& work, const std::string& tag) {
  const auto t0 = std::chrono::steady_clock::now();
  RunArtifacts run;
  run.dir = work / tag;
  fs::remove_all(run.dir);
  TrainConfig cfg;  // default model, crop 64, batch 3
  cfg.seed = 1;
  cfg.epochs = 10;  // 60 triplets / batch 3 = 20 steps per epoch
  cfg.data_dir = (work / "train").string();
  cfg.out_dir = run.dir.string();
  const auto result = train_epochs(cfg, load_dataset(cfg.data_dir), cfg.epochs, [&](const TrainLogEntry& e) {
    if (e.step % 20 == 19) std::cerr << "  [" << tag << "] step " << e.step + 1 << " loss " << e.loss << "\n";
  });
  auto params = load_checkpoint(result.final_checkpoint);
  run.report = eval_dataset(params, work / "val");
  std::ofstream csv(run.dir / "eval.csv");
  write_eval_csv(csv, run.report);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_dir = "acceptance_work";
  std::string only;
  std::vector<std::string> known;
  app.add_option("--work-dir", work_dir, "Scratch directory for datasets and training runs");
  app.add_option("--only", only, "Run only criteria whose id contains this string (e.g. C4)");
  app.add_option("--known-failure", known, "Criterion id whose failure is reported but not counted");
  CLI11_PARSE(app, argc, argv);

  const fs::path work(work_dir);
  fs::create_directories(work);
  int failures = 0;
  int tolerated = 0;
  auto run = [&](const std::string& id, const std::string& title, double limit_s, const std::function<Outcome()>& fn) {
    if (!only.empty() && id.find(only) == std::string::npos) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = s <= limit_s;
    const bool pass = o.pass && in_time;
    const bool is_known = std::find(known.begin(), known.end(), id) != known.end();
    if (!pass) ++(is_known ? tolerated : failures);
    std::printf("%s %s %s: %s; %.1f s (limit %.0f s%s)%s\n", pass ? "PASS" : "FAIL", id.c_str(), title.c_str(),
                o.detail.c_str(), s, limit_s, in_time ? "" : ", exceeded", !pass && is_known ? " [known failure]" : "");
    std::fflush(stdout);
  };

  run("C1", "oracle equivalence", 10, c1_oracle);
  run("C2", "block-diagonal long-range affinity", 30, c2_block_diagonal);
  run("C3", "full coverage of the two-level layer", 300, c3_coverage);
  run("C4", "complexity scaling", 600, c4_scaling);
  run("C5", "gradient correctness", 600, c5_gradients);
  run("C6", "loss and metric ground truths", 60, c6_ground_truths);

  const bool want_training =
      only.empty() || std::string("C7").find(only) != std::string::npos ||
      std::string("C8").find(only) != std::string::npos || std::string("C9").find(only) != std::string::npos;
  if (want_training) {
    write_dataset(work / "train", synthetic_set("train", 60, 1000));
    write_dataset(work / "val", synthetic_set("val", 32, 5000));
    RunArtifacts first, second;
    run("C7", "desk-scale learning beats the averaging baseline", 1800, [&] {
      first = train_and_eval(work, "run_a");
      const auto& m = first.report.mean_model;
      const auto& b = first.report.mean_baseline;
      if (!m || !b) return Outcome{false, "no triplet could be evaluated"};
      const double gap = m->psnr - b->psnr;
      return Outcome{gap >= 1.0, "model PSNR " + num(m->psnr) + " dB vs baseline " + num(b->psnr) + " dB, gap " +
                                     num(gap) + " dB (>= 1.0); SSIM " + num(m->ssim) + " vs " + num(b->ssim)};
    });
    run("C8", "bitwise determinism of training", 1800, [&] {
      second = train_and_eval(work, "run_b");
      std::size_t compared = 0, differing = 0;
      for (const auto& entry : fs::directory_iterator(first.dir)) {
        const auto name = entry.path().filename();
        if (entry.path().extension() != ".ckpt" && name != "train_log.csv" && name != "eval.csv") continue;
        ++compared;
        differing += file_bytes(entry.path()) != file_bytes(second.dir / name);
      }
      return Outcome{compared > 0 && differing == 0,
                     std::to_string(compared) + " checkpoints and CSV files compared, " + std::to_string(differing) + " differ"};
    });
    run("C9", "checkpoint persistence", 60, [&] {
      const fs::path ckpt = first.dir / "final.ckpt";
      const auto bytes = file_bytes(ckpt);
      if (bytes.empty()) return Outcome{false, "no checkpoint from the training run"};
      const auto loaded = load_checkpoint(ckpt);
      const bool same = encode_checkpoint(loaded) == bytes;
      auto corrupted = bytes;
      corrupted[corrupted.size() / 2] ^= 0x10;
      bool rejected = false;
      try {
        decode_checkpoint(corrupted);
      } catch (const CheckpointError& e) {
        rejected = e.kind() == CheckpointErrorKind::crc_mismatch;
      }
      return Outcome{same && rejected, std::string("round trip ") + (same ? "bitwise" : "differs") +
                                           ", corrupted byte " + (rejected ? "rejected by CRC" : "accepted")};
    });
  }

  if (failures)
    std::printf("FAILED: %d criterion(s) failed, %d known failure(s)\n", failures, tolerated);
  else if (tolerated)
    std::printf("PASSED apart from %d known failure(s)\n", tolerated);
  else
    std::printf("ALL PASSED\n");
  return failures ? 1 : 0;
}
