#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dan/attention.hpp"
#include "dan/autodiff.hpp"
#include "dan/tensor.hpp"

namespace dan {

struct ModelConfig {
  std::size_t channels = 32;       // C
  std::size_t rdb_count = 4;       // D
  std::size_t convs_per_rdb = 4;   // G
  std::size_t growth = 16;
  std::size_t reduction = 2;       // k
  std::size_t height = 64, width = 64;

  // Factorization for the configured frame size. The attention weights do not
  // depend on it, so frames of another size only need another factorization.
  AttentionConfig attention() const { return attention_for(height, width); }
  AttentionConfig attention_for(std::size_t h, std::size_t w) const;
  void validate() const;
};

// Named trainable tensors in insertion order. Names are unique.
template <class T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter<T>& add(const std::string& name, TensorT<T> value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter<T>& get(const std::string& name);
  const Parameter<T>& get(const std::string& name) const;

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::vector<std::string> names() const;
  // Names starting with `prefix`.
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  std::size_t element_count() const;
  void zero_grad();

  template <class U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& p : params_) out.add(p->name, p->value.template cast<U>());
    return out;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Lazily binds parameters onto one tape. With track=false parameters are
// recorded as constants and receive no gradient.
template <class T>
class Binding {
 public:
  Binding(Tape<T>& tape, ParameterStore<T>& store, bool track = true) : tape_(tape), store_(store), track_(track) {}

  Tape<T>& tape() { return tape_; }
  Var<T> operator()(const std::string& name);
  AttentionVars<T> attention(const std::string& prefix);

 private:
  Tape<T>& tape_;
  ParameterStore<T>& store_;
  bool track_;
  std::unordered_map<std::string, Var<T>> bound_;
};

// ---------------------------------------------------------------------------
// Parameter layout. Every initializer adds its tensors under `prefix`.

template <class T>
void init_srdn(ParameterStore<T>& store, const ModelConfig& cfg, std::uint64_t seed, const std::string& prefix = "srdn");
template <class T>
void init_warp_head(ParameterStore<T>& store, const ModelConfig& cfg, std::uint64_t seed, const std::string& prefix);
template <class T>
void init_blendnet(ParameterStore<T>& store, std::uint64_t seed, const std::string& prefix = "blend");

// Full pipeline: srdn, warp0, warp1, blend.
template <class T>
ParameterStore<T> init_dan(const ModelConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Forward passes. Frames are 1×H×W.

template <class T>
struct SfeOutput {
  Var<T> f_minus1;  // first conv, kept for the global residual
  Var<T> f0;
};

// `pair` is the 2×H×W concatenation [a; b].
template <class T>
SfeOutput<T> sfenet_forward(Binding<T>& b, const Var<T>& pair, const std::string& prefix = "srdn");

template <class T>
Var<T> rdb_forward(Binding<T>& b, const Var<T>& f_in, const ModelConfig& cfg, const std::string& prefix);

// SFENet → D RDBs → dense feature fusion + global residual.
template <class T>
Var<T> extractor_forward(Binding<T>& b, const Var<T>& pair, const ModelConfig& cfg,
                         const std::string& prefix = "srdn");

// (F_fwd, F_rev) from [a; b] and [b; a] with one parameter set.
template <class T>
std::pair<Var<T>, Var<T>> srdn_forward(Binding<T>& b, const Var<T>& frame_a, const Var<T>& frame_b,
                                       const ModelConfig& cfg, const std::string& prefix = "srdn");

// sigmoid(proj(F + γ·dal(F))), γ a learned scalar.
template <class T>
Var<T> warp_head(Binding<T>& b, const Var<T>& features, const ModelConfig& cfg, const std::string& prefix);

template <class T>
struct BlendOutput {
  Var<T> frame;   // w⊙warp0 + (1−w)⊙warp1
  Var<T> weight;  // w
};

template <class T>
BlendOutput<T> blendnet_forward(Binding<T>& b, const Var<T>& warp0, const Var<T>& warp1,
                                const std::string& prefix = "blend");

template <class T>
struct DanOutput {
  Var<T> f_fwd, f_rev, warp0, warp1, weight, frame;
};

template <class T>
DanOutput<T> dan_forward(Binding<T>& b, const Var<T>& prev, const Var<T>& next, const ModelConfig& cfg);

// Untaped inference.
template <class T>
TensorT<T> interpolate(ParameterStore<T>& store, const ModelConfig& cfg, const TensorT<T>& prev,
                       const TensorT<T>& next);

// Recovers the architecture from parameter shapes (e.g. after loading a checkpoint).
template <class T>
ModelConfig infer_config(const ParameterStore<T>& store, std::size_t height, std::size_t width);

}  // namespace dan
