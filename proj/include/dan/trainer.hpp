#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dan/data.hpp"
#include "dan/losses.hpp"
#include "dan/model.hpp"

namespace dan {

// ---------------------------------------------------------------------------
// Adam

struct OptimState {
  std::vector<Tensor> m, v;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update from Parameter::grad. Moments are created on the
// first call and must keep matching the store afterwards.
void adam_step(ParameterStore<float>& params, OptimState& state);

// base for epochs [0, 30), base/10 afterwards.
double lr_at_epoch(std::size_t epoch, double base = 1e-3);

// ---------------------------------------------------------------------------
// Checkpoints: "DANCKPT1", u32 version, u32 tensor count, then per tensor
// u32 name length, name, u32 rank, u32 dims, f32 payload; trailing CRC-32.
// All integers and floats little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParameterStore<float>& params);
ParameterStore<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ParameterStore<float>& params, const std::filesystem::path& path);
ParameterStore<float> load_checkpoint(const std::filesystem::path& path);

struct RestoreReport {
  std::vector<std::string> missing;   // in the model, absent from the checkpoint
  std::vector<std::string> extra;     // in the checkpoint, unknown to the model
  std::vector<std::string> mismatched;  // present in both with different shapes
  bool ok() const { return missing.empty() && extra.empty() && mismatched.empty(); }
  std::string describe() const;
};

RestoreReport compare_parameters(const ParameterStore<float>& model, const ParameterStore<float>& loaded);

// Copies every tensor of `loaded` into `model`. Throws CheckpointError
// (tensor_mismatch) with the report in its message unless the sets agree.
RestoreReport restore_parameters(ParameterStore<float>& model, const ParameterStore<float>& loaded);

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  std::size_t channels = 32;
  std::size_t rdb_count = 4;
  std::size_t convs_per_rdb = 4;
  std::size_t growth = 16;
  std::size_t k = 2;
  std::size_t crop = 64;
  std::size_t batch = 3;
  std::size_t epochs = 50;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string out_dir = "out";
  bool deterministic = true;
  bool histogram_spec = false;
  std::size_t max_steps = 0;  // 0 = no limit

  ModelConfig model() const;
};

TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training loop

struct TrainLogEntry {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global, counted from 0
  double loss = 0;
  double lr = 0;
};

struct TrainResult {
  ParameterStore<float> params;
  OptimState optim;
  std::vector<TrainLogEntry> log;
  std::vector<double> epoch_mean_loss;
  std::filesystem::path final_checkpoint;
};

using StepCallback = std::function<void(const TrainLogEntry&)>;

// Writes <out_dir>/train_log.csv, <out_dir>/epoch_NNN.ckpt after every epoch
// and <out_dir>/final.ckpt. On a non-finite value the parameters and the
// offending batch are dumped to <out_dir>/diagnostic.* before rethrowing.
TrainResult train_epochs(const TrainConfig& cfg, const Dataset& data, std::size_t epochs,
                         const StepCallback& on_step = {});

// Order in which samples are visited in `epoch`.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

}  // namespace dan
