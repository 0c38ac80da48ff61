// Command-line front end: train, interp, bench, verify, eval, synth.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dan/harness.hpp"
#include "dan/trainer.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

std::vector<std::size_t> parse_sizes(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v == 0) throw CLI::ValidationError("--sizes", "bad size '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--sizes", "no sizes given");
  return out;
}

int run_train(const std::string& config_path) {
  const auto cfg = dan::load_train_config(config_path);
  const auto data = dan::load_dataset(cfg.data_dir);
  std::cerr << "training on " << data.size() << " triplets from " << cfg.data_dir << '\n';
  std::size_t last_epoch = static_cast<std::size_t>(-1);
  auto result = dan::train_epochs(cfg, data, cfg.epochs, [&](const dan::TrainLogEntry& e) {
    if (e.epoch != last_epoch) {
      last_epoch = e.epoch;
      std::cerr << "epoch " << e.epoch << " lr " << e.lr << '\n';
    }
  });
  for (std::size_t e = 0; e < result.epoch_mean_loss.size(); ++e)
    std::cout << "epoch " << e << " mean loss " << result.epoch_mean_loss[e] << '\n';
  std::cout << "checkpoint " << result.final_checkpoint.string() << '\n';
  return kOk;
}

int run_interp(const std::string& ckpt, const std::string& prev, const std::string& next, const std::string& out) {
  auto params = dan::load_checkpoint(ckpt);
  const auto mid = dan::interpolate_frames(params, dan::read_pgm_file(prev), dan::read_pgm_file(next));
  dan::write_pgm_file(out, mid);
  return kOk;
}

int run_bench(const std::string& sizes, std::size_t channels, std::size_t k, const std::string& csv) {
  const auto report = dan::bench_attention_scaling(parse_sizes(sizes), channels, k);
  if (csv.empty()) {
    dan::write_bench_csv(std::cout, report);
  } else {
    std::ofstream out(csv);
    if (!out) throw dan::IoError("cannot write " + csv);
    dan::write_bench_csv(out, report);
  }
  for (const auto& s : report.skipped) std::cerr << "skipped " << s << " (dense cap " << dan::kDenseBenchCap << ")\n";
  for (const auto& f : report.fits)
    std::cerr << dan::to_string(f.scheme) << " exponent " << f.exponent << " over " << f.points << " sizes\n";
  return kOk;
}

int run_verify(const std::string& filter, bool break_softmax) {
  dan::VerifyOptions opts;
  opts.filter = filter;
  if (break_softmax) opts.softmax_axis = dan::SoftmaxAxis::rows;
  const auto results = dan::verify_properties(opts, &std::cout);
  bool all = true;
  for (const auto& r : results) all = all && r.pass;
  return all ? kOk : kFailure;
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& csv) {
  auto params = dan::load_checkpoint(ckpt);
  const auto report = dan::eval_dataset(params, data);
  std::ofstream out(csv);
  if (!out) throw dan::IoError("cannot write " + csv);
  dan::write_eval_csv(out, report);
  if (report.mean_model)
    std::cout << "mean psnr " << report.mean_model->psnr << " (baseline " << report.mean_baseline->psnr << ")\n";
  for (const auto& r : report.rows)
    if (r.status != "ok") std::cerr << r.name << ": " << r.status << '\n';
  return kOk;
}

int run_synth(const std::string& out, std::size_t count, std::size_t size, int max_shift, std::uint64_t seed) {
  dan::Dataset d;
  for (std::size_t i = 0; i < count; ++i) {
    d.names.push_back("s" + std::to_string(i));
    d.triplets.push_back(dan::make_synthetic_triplet(size, size, seed + i, max_shift));
  }
  dan::write_dataset(out, d);
  std::cout << "wrote " << count << " triplets to " << out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformation-aware frame interpolation"};
  app.require_subcommand(1);

  std::string config;
  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config, "key = value config file")->required();

  std::string ckpt, prev, next, out;
  auto* interp = app.add_subcommand("interp", "synthesize the middle frame of two PGM frames");
  interp->add_option("--ckpt", ckpt)->required();
  interp->add_option("--prev", prev)->required();
  interp->add_option("--next", next)->required();
  interp->add_option("--out", out)->required();

  std::string sizes = "4096,32768,262144", bench_csv;
  std::size_t channels = 32, k = 2;
  auto* bench = app.add_subcommand("bench", "count attention multiply-adds and fit scaling exponents");
  bench->add_option("--sizes", sizes, "comma-separated position counts");
  bench->add_option("--channels", channels)->check(CLI::PositiveNumber);
  bench->add_option("--k", k)->check(CLI::PositiveNumber);
  bench->add_option("--csv", bench_csv, "output file (default stdout)");

  std::string filter;
  bool break_softmax = false;
  auto* verify = app.add_subcommand("verify", "run the property checks, one JSON object per line");
  verify->add_option("--filter", filter, "run checks whose name contains this string");
  verify->add_flag("--break-softmax-axis", break_softmax, "normalize affinities along the wrong axis (fixture)");

  std::string data_dir, eval_csv;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset directory");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--csv", eval_csv)->required();

  std::string synth_out;
  std::size_t synth_count = 60, synth_size = 64;
  int synth_shift = 4;
  std::uint64_t synth_seed = 1000;
  auto* synth = app.add_subcommand("synth", "write a dataset of synthetic translation triplets");
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--count", synth_count)->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_size, "frame width and height")->check(CLI::Range(4, 4096));
  synth->add_option("--max-shift", synth_shift)->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", synth_seed, "seed of the first triplet; triplet i uses seed + i");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return run_train(config);
    if (*interp) return run_interp(ckpt, prev, next, out);
    if (*bench) return run_bench(sizes, channels, k, bench_csv);
    if (*verify) return run_verify(filter, break_softmax);
    if (*eval) return run_eval(ckpt, data_dir, eval_csv);
    if (*synth) return run_synth(synth_out, synth_count, synth_size, synth_shift, synth_seed);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const dan::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
