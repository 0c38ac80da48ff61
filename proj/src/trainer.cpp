#include "dan/trainer.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "dan/rng.hpp"

namespace dan {

void adam_step(ParameterStore<float>& params, OptimState& st) {
  if (st.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m.emplace_back(params[i].value.shape());
      st.v.emplace_back(params[i].value.shape());
    }
  }
  if (st.m.size() != params.size()) throw ContractError("optimizer state does not match the parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad.shape() != p.value.shape()) throw ContractError("parameter '" + p.name + "' has no gradient");
    if (st.m[i].shape() != p.value.shape()) throw ContractError("optimizer moments for '" + p.name + "' misshaped");
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      const double mj = st.beta1 * m[j] + (1.0 - st.beta1) * g;
      const double vj = st.beta2 * v[j] + (1.0 - st.beta2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = st.lr * (mj / c1) / (std::sqrt(vj / c2) + st.eps);
      p.value[j] = static_cast<float>(p.value[j] - update);
    }
  }
}

double lr_at_epoch(std::size_t epoch, double base) { return epoch < 30 ? base : base * 0.1; }

// ---------------------------------------------------------------------------
// Checkpoint encoding

namespace {

constexpr char kMagic[8] = {'D', 'A', 'N', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : bytes_(b), end_(end) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  const std::uint8_t* take(std::size_t n, const char* what) {
    need(n, what);
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (end_ - pos_ < n) throw CheckpointError(CheckpointErrorKind::truncated, std::string("checkpoint truncated in ") + what);
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = sizeof(kMagic);
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParameterStore<float>& params) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    const auto* raw = reinterpret_cast<const std::uint8_t*>(p.value.data().data());
    out.insert(out.end(), raw, raw + p.value.size() * sizeof(float));
  }
  put_u32(out, crc32_of(out.data(), out.size()));
  return out;
}

ParameterStore<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw CheckpointError(CheckpointErrorKind::bad_magic, "not a checkpoint: bad magic");
  if (bytes.size() < sizeof(kMagic) + 12) throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint truncated");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  const std::uint32_t actual = crc32_of(bytes.data(), body);
  if (stored != actual) {
    std::ostringstream msg;
    msg << "checkpoint CRC mismatch: stored " << std::hex << stored << ", computed " << actual;
    throw CheckpointError(CheckpointErrorKind::crc_mismatch, msg.str());
  }
  Reader r(bytes, body);
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorKind::version_mismatch,
                          "checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  const auto count = r.u32("tensor count");
  ParameterStore<float> out;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = r.u32("name length");
    const auto* name = r.take(len, "name");
    const auto rank = r.u32("rank");
    if (rank == 0) throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint tensor with rank 0");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(r.u32("dims"));
      numel *= shape.back();
      if (shape.back() == 0 || numel > r.remaining())
        throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint tensor larger than file");
    }
    const auto* payload = r.take(numel * sizeof(float), "payload");
    std::vector<float> values(numel);
    std::memcpy(values.data(), payload, numel * sizeof(float));
    const std::string key(reinterpret_cast<const char*>(name), len);
    if (out.contains(key))
      throw CheckpointError(CheckpointErrorKind::tensor_mismatch, "duplicate tensor '" + key + "' in checkpoint");
    out.add(key, Tensor(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) throw CheckpointError(CheckpointErrorKind::truncated, "trailing bytes after tensor table");
  return out;
}

void save_checkpoint(const ParameterStore<float>& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ParameterStore<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

std::string RestoreReport::describe() const {
  std::string s;
  auto list = [&](const char* label, const std::vector<std::string>& names) {
    if (names.empty()) return;
    if (!s.empty()) s += "; ";
    s += label;
    for (std::size_t i = 0; i < names.size(); ++i) s += (i ? ", " : " ") + names[i];
  };
  list("missing:", missing);
  list("extra:", extra);
  list("shape mismatch:", mismatched);
  return s.empty() ? "ok" : s;
}

RestoreReport compare_parameters(const ParameterStore<float>& model, const ParameterStore<float>& loaded) {
  RestoreReport r;
  for (const auto& n : model.names()) {
    if (!loaded.contains(n))
      r.missing.push_back(n);
    else if (loaded.get(n).value.shape() != model.get(n).value.shape())
      r.mismatched.push_back(n);
  }
  for (const auto& n : loaded.names())
    if (!model.contains(n)) r.extra.push_back(n);
  return r;
}

RestoreReport restore_parameters(ParameterStore<float>& model, const ParameterStore<float>& loaded) {
  auto r = compare_parameters(model, loaded);
  if (!r.ok()) throw CheckpointError(CheckpointErrorKind::tensor_mismatch, "checkpoint does not fit model: " + r.describe());
  for (std::size_t i = 0; i < model.size(); ++i) model[i].value = loaded.get(model[i].name).value;
  return r;
}

// ---------------------------------------------------------------------------
// Config

ModelConfig TrainConfig::model() const {
  ModelConfig m;
  m.channels = channels;
  m.rdb_count = rdb_count;
  m.convs_per_rdb = convs_per_rdb;
  m.growth = growth;
  m.reduction = k;
  m.height = m.width = crop;
  return m;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::uint64_t parse_unsigned(const std::string& v, const std::string& key, std::size_t line) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw ConfigError("line " + std::to_string(line) + ": '" + key + "' expects a non-negative integer, got '" + v + "'");
  return x;
}

double parse_double(const std::string& v, const std::string& key, std::size_t line) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(x))
    throw ConfigError("line " + std::to_string(line) + ": '" + key + "' expects a number, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& v, const std::string& key, std::size_t line) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("line " + std::to_string(line) + ": '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (value.empty()) throw ConfigError("line " + std::to_string(line_no) + ": '" + key + "' has no value");
    auto count = [&](std::size_t& field) { field = parse_unsigned(value, key, line_no); };
    if (key == "channels") count(c.channels);
    else if (key == "rdb_count") count(c.rdb_count);
    else if (key == "convs_per_rdb") count(c.convs_per_rdb);
    else if (key == "growth") count(c.growth);
    else if (key == "k") count(c.k);
    else if (key == "crop") count(c.crop);
    else if (key == "batch") count(c.batch);
    else if (key == "epochs") count(c.epochs);
    else if (key == "max_steps") count(c.max_steps);
    else if (key == "lr") c.lr = parse_double(value, key, line_no);
    else if (key == "seed") c.seed = parse_unsigned(value, key, line_no);
    else if (key == "data_dir") c.data_dir = value;
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "deterministic") c.deterministic = parse_bool(value, key, line_no);
    else if (key == "histogram_spec") c.histogram_spec = parse_bool(value, key, line_no);
    else throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  if (c.batch == 0) throw ConfigError("batch must be at least 1");
  if (c.crop == 0) throw ConfigError("crop must be at least 1");
  if (!(c.lr > 0)) throw ConfigError("lr must be positive");
  try {
    c.model().validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid model configuration: ") + e.what());
  }
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

// ---------------------------------------------------------------------------
// Training

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng rng(derive_seed(seed, epoch, 0x5EED), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(static_cast<std::uint32_t>(i))]);
  return order;
}

namespace {

std::string epoch_name(std::size_t epoch) {
  std::ostringstream s;
  s << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".ckpt";
  return s.str();
}

void dump_diagnostic(const std::filesystem::path& dir, const ParameterStore<float>& params, std::size_t epoch,
                     std::size_t step, const std::vector<std::string>& samples, const std::string& what) {
  std::ofstream out(dir / "diagnostic.txt");
  out << "error: " << what << "\nepoch: " << epoch << "\nstep: " << step << "\nsamples:";
  for (const auto& s : samples) out << ' ' << s;
  out << "\nparameters:\n";
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    double max_abs = 0, grad_abs = 0;
    bool finite = true;
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      finite = finite && std::isfinite(p.value[j]);
      max_abs = std::max(max_abs, std::abs(static_cast<double>(p.value[j])));
      grad_abs = std::max(grad_abs, std::abs(static_cast<double>(p.grad[j])));
    }
    out << "  " << p.name << ' ' << shape_str(p.value.shape()) << " max|w|=" << max_abs << " max|g|=" << grad_abs
        << (finite ? "" : " NON-FINITE") << '\n';
  }
  try {
    save_checkpoint(params, dir / "diagnostic.ckpt");
  } catch (const Error&) {
    // the text dump is still useful on its own
  }
}

}  // namespace

TrainResult train_epochs(const TrainConfig& cfg, const Dataset& input, std::size_t epochs, const StepCallback& on_step) {
  if (input.size() == 0) throw ContractError("training dataset is empty");
  if (cfg.batch == 0) throw ContractError("batch must be at least 1");
  const ModelConfig mcfg = cfg.model();
  mcfg.validate();
  const Dataset data = cfg.histogram_spec ? specify_histograms(input) : input;

  const std::filesystem::path out_dir(cfg.out_dir);
  std::filesystem::create_directories(out_dir);
  std::ofstream log_csv(out_dir / "train_log.csv");
  if (!log_csv) throw IoError("cannot write " + (out_dir / "train_log.csv").string());
  log_csv << "epoch,step,loss,lr\n";

  TrainResult result{init_dan<float>(mcfg, cfg.seed), OptimState{}, {}, {}, {}};
  auto& params = result.params;
  const PerceptualStack<float> stack;
  const LossWeights weights;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    if (cfg.max_steps && step >= cfg.max_steps) break;
    result.optim.lr = lr_at_epoch(epoch, cfg.lr);
    const auto order = epoch_order(data.size(), cfg.seed, epoch);
    double epoch_sum = 0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      if (cfg.max_steps && step >= cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      params.zero_grad();
      double batch_loss = 0;
      std::vector<std::string> names;
      try {
        for (std::size_t s = start; s < end; ++s) {
          const std::size_t idx = order[s];
          names.push_back(idx < data.names.size() ? data.names[idx] : std::to_string(idx));
          const Triplet t = augment(data.triplets[idx], derive_seed(cfg.seed, epoch, 0xA000000 + s), cfg.crop);
          Tape<float> tape;
          Binding<float> bind(tape, params);
          auto out = dan_forward(bind, tape.constant(to_tensor<float>(t.prev)),
                                 tape.constant(to_tensor<float>(t.next)), mcfg);
          auto loss = ag::total_loss(out.frame, tape.constant(to_tensor<float>(t.mid)), weights, stack);
          tape.backward(loss.total);
          batch_loss += loss.total.value()[0];
        }
        const float inv = 1.0f / static_cast<float>(end - start);
        for (std::size_t i = 0; i < params.size(); ++i) {
          for (auto& g : params[i].grad.storage()) g *= inv;
          params[i].grad.check_finite(params[i].name + " gradient");
        }
        adam_step(params, result.optim);
        for (std::size_t i = 0; i < params.size(); ++i) params[i].value.check_finite(params[i].name);
      } catch (const NumericError& e) {
        dump_diagnostic(out_dir, params, epoch, step, names, e.what());
        throw NumericError(std::string(e.what()) + " (state dumped to " + (out_dir / "diagnostic.txt").string() + ")");
      }
      const TrainLogEntry entry{epoch, step, batch_loss / static_cast<double>(end - start), result.optim.lr};
      result.log.push_back(entry);
      log_csv << entry.epoch << ',' << entry.step << ',' << std::setprecision(9) << entry.loss << ','
              << std::setprecision(6) << entry.lr << '\n';
      if (on_step) on_step(entry);
      epoch_sum += entry.loss;
      ++epoch_steps;
      ++step;
    }
    if (epoch_steps == 0) break;
    result.epoch_mean_loss.push_back(epoch_sum / static_cast<double>(epoch_steps));
    save_checkpoint(params, out_dir / epoch_name(epoch));
  }
  result.final_checkpoint = out_dir / "final.ckpt";
  save_checkpoint(params, result.final_checkpoint);
  return result;
}

}  // namespace dan
