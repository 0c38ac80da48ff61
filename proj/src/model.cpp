#include "dan/model.hpp"

#include <cmath>

#include "dan/rng.hpp"

namespace dan {

AttentionConfig ModelConfig::attention_for(std::size_t h, std::size_t w) const {
  return AttentionConfig::for_positions(h * w, channels, reduction);
}

void ModelConfig::validate() const {
  if (channels == 0 || rdb_count == 0 || convs_per_rdb == 0 || growth == 0 || reduction == 0 || height == 0 ||
      width == 0)
    throw ContractError("model counts must all be at least 1");
  if (channels % reduction != 0)
    throw ContractError("channels " + std::to_string(channels) + " not divisible by k = " + std::to_string(reduction));
  attention().validate();
}

// ---------------------------------------------------------------------------

template <class T>
Parameter<T>& ParameterStore<T>::add(const std::string& name, TensorT<T> value) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter<T>>(name, std::move(value)));
  return *params_.back();
}

template <class T>
Parameter<T>& ParameterStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

template <class T>
const Parameter<T>& ParameterStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

template <class T>
std::vector<std::string> ParameterStore<T>::names() const {
  std::vector<std::string> out;
  for (const auto& p : params_) out.push_back(p->name);
  return out;
}

template <class T>
std::vector<std::string> ParameterStore<T>::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& p : params_)
    if (p->name.compare(0, prefix.size(), prefix) == 0) out.push_back(p->name);
  return out;
}

template <class T>
std::size_t ParameterStore<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <class T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <class T>
Var<T> Binding<T>::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  auto& p = store_.get(name);
  Var<T> v = track_ ? tape_.param(p) : tape_.constant(p.value);
  bound_.emplace(name, v);
  return v;
}

template <class T>
AttentionVars<T> Binding<T>::attention(const std::string& prefix) {
  return {(*this)(prefix + ".wf"), (*this)(prefix + ".wg"), (*this)(prefix + ".wh"), (*this)(prefix + ".wv")};
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

template <class T>
class Initializer {
 public:
  Initializer(ParameterStore<T>& store, std::uint64_t seed) : store_(store), seed_(seed) {}

  // He-normal kernel (relu=true) or 1/fan_in variance, zero bias.
  void conv(const std::string& name, std::size_t out, std::size_t in, std::size_t ksize, bool relu) {
    const double fan_in = static_cast<double>(in * ksize * ksize);
    const double stddev = std::sqrt((relu ? 2.0 : 1.0) / fan_in);
    store_.add(name + ".w", seeded_normal<T>({out, in, ksize, ksize}, next_seed(), stddev));
    store_.add(name + ".b", TensorT<T>({out}));
  }

  void attention(const std::string& name, std::size_t channels, std::size_t key_dim) {
    auto w = AttentionWeights<T>::random(channels, key_dim, next_seed());
    store_.add(name + ".wf", std::move(w.wf));
    store_.add(name + ".wg", std::move(w.wg));
    store_.add(name + ".wh", std::move(w.wh));
    store_.add(name + ".wv", std::move(w.wv));
  }

 private:
  std::uint64_t next_seed() { return derive_seed(seed_, counter_++, 0x1417); }

  ParameterStore<T>& store_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::string rdb_name(const std::string& prefix, std::size_t i) { return prefix + ".rdb" + std::to_string(i); }

}  // namespace

template <class T>
void init_srdn(ParameterStore<T>& store, const ModelConfig& cfg, std::uint64_t seed, const std::string& prefix) {
  Initializer<T> init(store, seed);
  const std::size_t c = cfg.channels;
  init.conv(prefix + ".sfe1", c, 2, 3, false);
  init.conv(prefix + ".sfe2", c, c, 3, false);
  for (std::size_t r = 0; r < cfg.rdb_count; ++r) {
    const auto name = rdb_name(prefix, r);
    for (std::size_t g = 0; g < cfg.convs_per_rdb; ++g)
      init.conv(name + ".conv" + std::to_string(g), cfg.growth, c + g * cfg.growth, 3, true);
    init.conv(name + ".fuse", c, c + cfg.convs_per_rdb * cfg.growth, 1, false);
  }
  init.conv(prefix + ".gff1", c, c * cfg.rdb_count, 1, false);
  init.conv(prefix + ".gff2", c, c, 3, false);
}

template <class T>
void init_warp_head(ParameterStore<T>& store, const ModelConfig& cfg, std::uint64_t seed, const std::string& prefix) {
  Initializer<T> init(store, seed);
  const std::size_t d = cfg.channels / cfg.reduction;
  init.attention(prefix + ".ll", cfg.channels, d);
  init.attention(prefix + ".ls", cfg.channels, d);
  init.attention(prefix + ".s", cfg.channels, d);
  store.add(prefix + ".gamma", TensorT<T>({1}));
  init.conv(prefix + ".proj", 1, cfg.channels, 1, false);
}

template <class T>
void init_blendnet(ParameterStore<T>& store, std::uint64_t seed, const std::string& prefix) {
  Initializer<T> init(store, seed);
  init.conv(prefix + ".c1", 16, 2, 3, true);
  init.conv(prefix + ".c2", 16, 16, 3, true);
  init.conv(prefix + ".c3", 1, 16, 3, false);
}

template <class T>
ParameterStore<T> init_dan(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterStore<T> store;
  init_srdn(store, cfg, derive_seed(seed, 1, 0), "srdn");
  init_warp_head(store, cfg, derive_seed(seed, 2, 0), "warp0");
  init_warp_head(store, cfg, derive_seed(seed, 3, 0), "warp1");
  init_blendnet(store, derive_seed(seed, 4, 0), "blend");
  return store;
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

template <class T>
Var<T> conv(Binding<T>& b, const std::string& name, const Var<T>& x, std::size_t padding) {
  return ag::conv2d(x, b(name + ".w"), b(name + ".b"), padding);
}

template <class T>
Var<T> concat(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return ag::concat_channels<T>(v);
}

// s·x for a learned scalar s (shape {1}).
template <class T>
Var<T> scale_by(const Var<T>& x, const Var<T>& s) {
  const T k = s.value()[0];
  TensorT<T> out = x.value();
  for (auto& v : out.storage()) v *= k;
  return x.tape().record("scale_by", std::move(out), {x, s},
                         [x, s](Tape<T>& tape, const TensorT<T>& g, const TensorT<T>&) {
                           const T k = s.value()[0];
                           if (tape.requires_grad(x)) {
                             TensorT<T> gx = g;
                             for (auto& v : gx.storage()) v *= k;
                             tape.accumulate(x, gx);
                           }
                           if (tape.requires_grad(s)) {
                             T acc = 0;
                             const auto& xv = x.value();
                             for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
                             tape.accumulate(s, TensorT<T>({1}, std::vector<T>{acc}));
                           }
                         });
}

void check_frame(const Shape& s, const char* what) {
  if (s.size() != 3 || s[0] != 1) throw DimensionError(std::string(what) + " must be 1×H×W, got " + shape_str(s));
}

}  // namespace

template <class T>
SfeOutput<T> sfenet_forward(Binding<T>& b, const Var<T>& pair, const std::string& prefix) {
  if (pair.shape().size() != 3 || pair.shape()[0] != 2)
    throw DimensionError("SFENet expects a 2×H×W frame pair, got " + shape_str(pair.shape()));
  SfeOutput<T> out;
  out.f_minus1 = conv(b, prefix + ".sfe1", pair, 1);
  out.f0 = conv(b, prefix + ".sfe2", out.f_minus1, 1);
  return out;
}

template <class T>
Var<T> rdb_forward(Binding<T>& b, const Var<T>& f_in, const ModelConfig& cfg, const std::string& prefix) {
  if (f_in.shape().size() != 3 || f_in.shape()[0] != cfg.channels)
    throw DimensionError(prefix + ": expected " + std::to_string(cfg.channels) + " input channels, got " +
                         shape_str(f_in.shape()));
  std::vector<Var<T>> stack{f_in};
  for (std::size_t g = 0; g < cfg.convs_per_rdb; ++g) {
    Var<T> in = stack.size() == 1 ? stack[0] : ag::concat_channels<T>(stack);
    stack.push_back(ag::relu(conv(b, prefix + ".conv" + std::to_string(g), in, 1)));
  }
  Var<T> fused = conv(b, prefix + ".fuse", ag::concat_channels<T>(stack), 0);
  return ag::add(f_in, fused);
}

template <class T>
Var<T> extractor_forward(Binding<T>& b, const Var<T>& pair, const ModelConfig& cfg, const std::string& prefix) {
  auto sfe = sfenet_forward(b, pair, prefix);
  std::vector<Var<T>> outputs;
  Var<T> f = sfe.f0;
  for (std::size_t r = 0; r < cfg.rdb_count; ++r) {
    f = rdb_forward(b, f, cfg, rdb_name(prefix, r));
    outputs.push_back(f);
  }
  Var<T> dff = outputs.size() == 1 ? outputs[0] : ag::concat_channels<T>(outputs);
  dff = conv(b, prefix + ".gff2", conv(b, prefix + ".gff1", dff, 0), 1);
  return ag::add(dff, sfe.f_minus1);
}

template <class T>
std::pair<Var<T>, Var<T>> srdn_forward(Binding<T>& b, const Var<T>& frame_a, const Var<T>& frame_b,
                                       const ModelConfig& cfg, const std::string& prefix) {
  check_frame(frame_a.shape(), "first frame");
  check_frame(frame_b.shape(), "second frame");
  if (frame_a.shape() != frame_b.shape())
    throw DimensionError("frame sizes differ: " + shape_str(frame_a.shape()) + " vs " + shape_str(frame_b.shape()));
  Var<T> fwd = extractor_forward(b, concat({frame_a, frame_b}), cfg, prefix);
  Var<T> rev = extractor_forward(b, concat({frame_b, frame_a}), cfg, prefix);
  return {fwd, rev};
}

template <class T>
Var<T> warp_head(Binding<T>& b, const Var<T>& features, const ModelConfig& cfg, const std::string& prefix) {
  const Shape s = features.shape();
  if (s.size() != 3 || s[0] != cfg.channels)
    throw DimensionError(prefix + ": expected " + std::to_string(cfg.channels) + "×H×W features, got " + shape_str(s));
  const AttentionConfig att = cfg.attention_for(s[1], s[2]);
  Var<T> flat = ag::reshape(features, {s[0], s[1] * s[2]});
  Var<T> z = ag::dal_forward(flat, att, b.attention(prefix + ".ll"), b.attention(prefix + ".ls"),
                             b.attention(prefix + ".s"));
  Var<T> mixed = ag::add(flat, scale_by(z, b(prefix + ".gamma")));
  return ag::sigmoid(conv(b, prefix + ".proj", ag::reshape(mixed, s), 0));
}

template <class T>
BlendOutput<T> blendnet_forward(Binding<T>& b, const Var<T>& warp0, const Var<T>& warp1, const std::string& prefix) {
  check_frame(warp0.shape(), "warp0");
  if (warp0.shape() != warp1.shape())
    throw DimensionError("blendnet inputs differ: " + shape_str(warp0.shape()) + " vs " + shape_str(warp1.shape()));
  Var<T> h = ag::relu(conv(b, prefix + ".c1", concat({warp0, warp1}), 1));
  h = ag::relu(conv(b, prefix + ".c2", h, 1));
  Var<T> w = ag::sigmoid(conv(b, prefix + ".c3", h, 1));
  // warp1 + w⊙(warp0 − warp1) is exactly warp0 when both inputs agree.
  Var<T> frame = ag::add(warp1, ag::mul(w, ag::sub(warp0, warp1)));
  return {frame, w};
}

template <class T>
DanOutput<T> dan_forward(Binding<T>& b, const Var<T>& prev, const Var<T>& next, const ModelConfig& cfg) {
  DanOutput<T> out;
  std::tie(out.f_fwd, out.f_rev) = srdn_forward(b, prev, next, cfg, "srdn");
  out.warp0 = warp_head(b, out.f_fwd, cfg, "warp0");
  out.warp1 = warp_head(b, out.f_rev, cfg, "warp1");
  auto blend = blendnet_forward(b, out.warp0, out.warp1, "blend");
  out.frame = blend.frame;
  out.weight = blend.weight;
  return out;
}

template <class T>
TensorT<T> interpolate(ParameterStore<T>& store, const ModelConfig& cfg, const TensorT<T>& prev,
                       const TensorT<T>& next) {
  Tape<T> tape(false);
  Binding<T> b(tape, store, false);
  auto out = dan_forward(b, tape.constant(prev), tape.constant(next), cfg);
  return out.frame.value();
}

template <class T>
ModelConfig infer_config(const ParameterStore<T>& store, std::size_t height, std::size_t width) {
  ModelConfig cfg;
  cfg.height = height;
  cfg.width = width;
  cfg.channels = store.get("srdn.sfe1.w").value.dim(0);
  cfg.rdb_count = 0;
  while (store.contains("srdn.rdb" + std::to_string(cfg.rdb_count) + ".fuse.w")) ++cfg.rdb_count;
  cfg.convs_per_rdb = 0;
  while (store.contains("srdn.rdb0.conv" + std::to_string(cfg.convs_per_rdb) + ".w")) ++cfg.convs_per_rdb;
  if (cfg.rdb_count == 0 || cfg.convs_per_rdb == 0) throw ContractError("parameter set has no residual dense blocks");
  cfg.growth = store.get("srdn.rdb0.conv0.w").value.dim(0);
  const std::size_t d = store.get("warp0.ll.wf").value.dim(0);
  if (d == 0 || cfg.channels % d != 0) throw ContractError("attention key dimension does not divide channels");
  cfg.reduction = cfg.channels / d;
  return cfg;
}

#define DAN_INSTANTIATE(T)                                                                                      \
  template class ParameterStore<T>;                                                                             \
  template class Binding<T>;                                                                                    \
  template void init_srdn<T>(ParameterStore<T>&, const ModelConfig&, std::uint64_t, const std::string&);        \
  template void init_warp_head<T>(ParameterStore<T>&, const ModelConfig&, std::uint64_t, const std::string&);   \
  template void init_blendnet<T>(ParameterStore<T>&, std::uint64_t, const std::string&);                        \
  template ParameterStore<T> init_dan<T>(const ModelConfig&, std::uint64_t);                                    \
  template SfeOutput<T> sfenet_forward<T>(Binding<T>&, const Var<T>&, const std::string&);                      \
  template Var<T> rdb_forward<T>(Binding<T>&, const Var<T>&, const ModelConfig&, const std::string&);           \
  template Var<T> extractor_forward<T>(Binding<T>&, const Var<T>&, const ModelConfig&, const std::string&);     \
  template std::pair<Var<T>, Var<T>> srdn_forward<T>(Binding<T>&, const Var<T>&, const Var<T>&,                 \
                                                     const ModelConfig&, const std::string&);                   \
  template Var<T> warp_head<T>(Binding<T>&, const Var<T>&, const ModelConfig&, const std::string&);             \
  template BlendOutput<T> blendnet_forward<T>(Binding<T>&, const Var<T>&, const Var<T>&, const std::string&);   \
  template DanOutput<T> dan_forward<T>(Binding<T>&, const Var<T>&, const Var<T>&, const ModelConfig&);          \
  template TensorT<T> interpolate<T>(ParameterStore<T>&, const ModelConfig&, const TensorT<T>&,                 \
                                     const TensorT<T>&);                                                        \
  template ModelConfig infer_config<T>(const ParameterStore<T>&, std::size_t, std::size_t);

DAN_INSTANTIATE(float)
DAN_INSTANTIATE(double)

}  // namespace dan
