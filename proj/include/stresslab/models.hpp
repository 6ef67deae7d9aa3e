#pragma once

#include <deque>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "stresslab/gradcheck.hpp"
#include "stresslab/optimizer.hpp"

namespace stresslab {

enum class ArchId { kScsnet, kStressnet, kFusionnet };

inline const char* arch_name(ArchId a) {
  switch (a) {
    case ArchId::kScsnet: return "scsnet";
    case ArchId::kStressnet: return "stressnet";
    case ArchId::kFusionnet: return "fusionnet";
  }
  return "?";
}

inline ArchId arch_from_name(const std::string& s) {
  if (s == "scsnet") return ArchId::kScsnet;
  if (s == "stressnet") return ArchId::kStressnet;
  if (s == "fusionnet") return ArchId::kFusionnet;
  fail("config-mismatch", "unknown architecture '" + s + "'");
}

struct ArchitectureConfig {
  ArchId arch = ArchId::kStressnet;
  int height = 24, width = 32;
  std::vector<int> widths;  // channel widths; empty selects the defaults
  int se_reduction = 16;
  int res_blocks = 5;
  uint64_t seed = 0;

  /// Fills per-architecture default widths and checks the invariants.
  void normalize() {
    if (widths.empty()) {
      switch (arch) {
        case ArchId::kScsnet: widths = {32, 64, 16}; break;
        case ArchId::kStressnet: widths = {32, 64, 128}; break;
        case ArchId::kFusionnet: widths = {32, 64}; break;
      }
    }
    require(res_blocks >= 1, "config-mismatch", "need at least one block");
    require(se_reduction >= 1, "config-mismatch", "bad SE reduction");
    for (int w : widths)
      require(w > 0, "config-mismatch", "channel widths must be positive");
    require(height % 4 == 0 && width % 4 == 0, "config-mismatch",
            "input dimensions must be divisible by 4");
  }
};

/// Per-batch network inputs; models pick the tensors they consume.
template <typename T>
struct ModelInput {
  const Tensor<T>* multi = nullptr;   // [n, h, w, 5]
  const Tensor<T>* single = nullptr;  // [n, h, w, 1]
  const Tensor<T>* load = nullptr;    // [n, 2] = (qx, qy)
};

/// Extracts `count` trailing-axis channels starting at `from`.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int from, int count) {
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<T> out({n, h, w, count});
  const int64_t rows = static_cast<int64_t>(n) * h * w;
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < count; ++j)
      out[r * count + j] = x[r * c + from + j];
  return out;
}

template <typename T>
class SurrogateModel {
 public:
  virtual ~SurrogateModel() = default;

  const ArchitectureConfig& config() const { return cfg_; }
  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

  struct AuxRef {
    std::string name;
    Tensor<T>* tensor;
  };
  const std::vector<AuxRef>& aux_state() const { return aux_; }

  int conv_layer_count() const { return conv_layers_; }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const Parameter<T>& p : params_) n += p.tensor().size();
    return n;
  }

  virtual Value<T> forward(Tape<T>& tape, const ModelInput<T>& in, Mode mode) = 0;

 protected:
  explicit SurrogateModel(ArchitectureConfig cfg)
      : cfg_(std::move(cfg)), rng_(cfg_.seed) {}

  Tensor<T> normal_init(const std::vector<int>& shape, double stddev) {
    Tensor<T> t(shape);
    std::normal_distribution<double> dist(0.0, stddev);
    for (int64_t i = 0; i < t.size(); ++i)
      t[i] = static_cast<T>(dist(rng_));
    return t;
  }

  Value<T> add_param(const std::string& name, Tensor<T> init) {
    params_.emplace_back(name, std::move(init));
    return params_.back().node;
  }

  struct Conv {
    Value<T> w, b;
  };

  /// He fan-in initialized convolution; bias optional (omitted before BN).
  Conv make_conv(const std::string& name, int kh, int kw, int cin, int cout,
                 bool bias) {
    ++conv_layers_;
    const double stddev = std::sqrt(2.0 / (static_cast<double>(kh) * kw * cin));
    Conv c;
    c.w = add_param(name + ".w", normal_init({kh, kw, cin, cout}, stddev));
    if (bias) c.b = add_param(name + ".b", Tensor<T>({cout}));
    return c;
  }

  Conv make_tconv(const std::string& name, int kh, int kw, int cin, int cout,
                  bool bias) {
    ++conv_layers_;
    const double stddev = std::sqrt(2.0 / (static_cast<double>(kh) * kw * cin));
    Conv c;
    c.w = add_param(name + ".w", normal_init({cin, kh, kw, cout}, stddev));
    if (bias) c.b = add_param(name + ".b", Tensor<T>({cout}));
    return c;
  }

  struct Fc {
    Value<T> w, b;
  };

  Fc make_fc(const std::string& name, int din, int dout) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(din));
    Fc f;
    f.w = add_param(name + ".w", normal_init({din, dout}, stddev));
    f.b = add_param(name + ".b", Tensor<T>({dout}));
    return f;
  }

  struct Bn {
    Value<T> gamma, beta;
    BatchNormState<T>* state = nullptr;
  };

  Bn make_bn(const std::string& name, int channels) {
    Bn b;
    Tensor<T> ones({channels});
    ones.fill(T(1));
    b.gamma = add_param(name + ".gamma", std::move(ones));
    b.beta = add_param(name + ".beta", Tensor<T>({channels}));
    bn_states_.emplace_back(channels);
    b.state = &bn_states_.back();
    aux_.push_back({name + ".running_mean", &b.state->running_mean});
    aux_.push_back({name + ".running_var", &b.state->running_var});
    return b;
  }

  Value<T> apply_bn(Tape<T>& tape, const Value<T>& x, const Bn& bn, Mode mode) {
    return batch_norm(tape, x, bn.gamma, bn.beta, *bn.state, mode);
  }

  ArchitectureConfig cfg_;
  std::vector<Parameter<T>> params_;
  std::vector<AuxRef> aux_;
  std::deque<BatchNormState<T>> bn_states_;
  std::mt19937_64 rng_;
  int conv_layers_ = 0;
};

// ---------------------------------------------------------------------------
// SCSNet: single-channel convolutional autoencoder with the load pair
// concatenated onto the bottleneck feature representation.
// ---------------------------------------------------------------------------

template <typename T>
class ScsNet : public SurrogateModel<T> {
  using Base = SurrogateModel<T>;
  using typename Base::Conv;
  using typename Base::Fc;

 public:
  explicit ScsNet(ArchitectureConfig cfg) : Base(std::move(cfg)) {
    const auto& w = this->cfg_.widths;
    require(w.size() == 3, "config-mismatch", "scsnet expects three widths");
    h4_ = this->cfg_.height / 4;
    w4_ = this->cfg_.width / 4;
    flat_ = h4_ * w4_ * w[1];

    e1_ = this->make_conv("e1", 3, 3, 1, w[0], true);
    e3_ = this->make_conv("e3", 3, 3, w[0], w[1], true);
    e6_ = this->make_fc("e6", flat_, kFcDim);
    e7_ = this->make_fc("e7", kFcDim, kBottleneck);
    d1_ = this->make_fc("d1", kBottleneck + 2, kFcDim);
    d2_ = this->make_fc("d2", kFcDim, flat_);
    d5_ = this->make_conv("d5", 3, 3, w[1], w[0], true);
    d7_ = this->make_conv("d7", 3, 3, w[0], w[2], true);
    d8_ = this->make_conv("d8", 3, 3, w[2], 1, true);
  }

  Value<T> forward(Tape<T>& tape, const ModelInput<T>& in, Mode) override {
    require(in.single && in.load, "arch-input-mismatch",
            "scsnet needs the single-channel image and the load pair");
    const int n = in.single->dim(0);
    Value<T> x = make_leaf(*in.single);
    Value<T> load = make_leaf(*in.load);

    Value<T> h = relu(tape, conv2d(tape, x, e1_.w, e1_.b, 1, Pad::kSame));
    h = max_pool2x2(tape, h);
    h = relu(tape, conv2d(tape, h, e3_.w, e3_.b, 1, Pad::kSame));
    h = max_pool2x2(tape, h);
    h = reshape(tape, h, {n, flat_});
    h = relu(tape, fully_connected(tape, h, e6_.w, e6_.b));
    h = relu(tape, fully_connected(tape, h, e7_.w, e7_.b));
    h = concat_features(tape, h, load);  // FR: bottleneck + (qx, qy)
    h = relu(tape, fully_connected(tape, h, d1_.w, d1_.b));
    h = relu(tape, fully_connected(tape, h, d2_.w, d2_.b));
    h = reshape(tape, h, {n, h4_, w4_, this->cfg_.widths[1]});
    h = upsample2x(tape, h);
    h = relu(tape, conv2d(tape, h, d5_.w, d5_.b, 1, Pad::kSame));
    h = upsample2x(tape, h);
    h = relu(tape, conv2d(tape, h, d7_.w, d7_.b, 1, Pad::kSame));
    return relu(tape, conv2d(tape, h, d8_.w, d8_.b, 1, Pad::kSame));
  }

  static constexpr int kFcDim = 1024;
  static constexpr int kBottleneck = 30;

 private:
  int h4_ = 0, w4_ = 0, flat_ = 0;
  Conv e1_, e3_, d5_, d7_, d8_;
  Fc e6_, e7_, d1_, d2_;
};

// ---------------------------------------------------------------------------
// StressNet: strided downsampling, SE-ResNet trunk, strided transposed
// convolutions back to full resolution.
// ---------------------------------------------------------------------------

template <typename T>
class StressNet : public SurrogateModel<T> {
  using Base = SurrogateModel<T>;
  using typename Base::Bn;
  using typename Base::Conv;
  using typename Base::Fc;

 public:
  explicit StressNet(ArchitectureConfig cfg) : Base(std::move(cfg)) {
    const auto& w = this->cfg_.widths;
    require(w.size() == 3, "config-mismatch", "stressnet expects three widths");

    c1_ = this->make_conv("c1", 9, 9, 5, w[0], false);
    c1_bn_ = this->make_bn("c1.bn", w[0]);
    c2_ = this->make_conv("c2", 3, 3, w[0], w[1], false);
    c2_bn_ = this->make_bn("c2.bn", w[1]);
    c3_ = this->make_conv("c3", 3, 3, w[1], w[2], false);
    c3_bn_ = this->make_bn("c3.bn", w[2]);

    const int c = w[2];
    const int squeezed = std::max(1, c / this->cfg_.se_reduction);
    for (int i = 0; i < this->cfg_.res_blocks; ++i) {
      const std::string prefix = "block" + std::to_string(i);
      ResBlock b;
      b.conv1 = this->make_conv(prefix + ".conv1", 3, 3, c, c, false);
      b.bn1 = this->make_bn(prefix + ".bn1", c);
      b.conv2 = this->make_conv(prefix + ".conv2", 3, 3, c, c, false);
      b.bn2 = this->make_bn(prefix + ".bn2", c);
      b.se_fc1 = this->make_fc(prefix + ".se.fc1", c, squeezed);
      b.se_fc2 = this->make_fc(prefix + ".se.fc2", squeezed, c);
      blocks_.push_back(std::move(b));
    }

    c4_ = this->make_tconv("c4", 3, 3, w[2], w[1], false);
    c4_bn_ = this->make_bn("c4.bn", w[1]);
    c5_ = this->make_tconv("c5", 3, 3, w[1], w[0], false);
    c5_bn_ = this->make_bn("c5.bn", w[0]);
    c6_ = this->make_conv("c6", 9, 9, w[0], 1, true);
  }

  Value<T> forward(Tape<T>& tape, const ModelInput<T>& in, Mode mode) override {
    require(in.multi, "arch-input-mismatch",
            "stressnet needs the five-channel input");
    Value<T> x = make_leaf(*in.multi);

    Value<T> h = relu(tape, this->apply_bn(
        tape, conv2d(tape, x, c1_.w, c1_.b, 1, Pad::kSame), c1_bn_, mode));
    h = relu(tape, this->apply_bn(
        tape, conv2d(tape, h, c2_.w, c2_.b, 2, Pad::kSame), c2_bn_, mode));
    h = relu(tape, this->apply_bn(
        tape, conv2d(tape, h, c3_.w, c3_.b, 2, Pad::kSame), c3_bn_, mode));

    for (const ResBlock& b : blocks_) h = residual(tape, h, b, mode);

    h = relu(tape, this->apply_bn(
        tape, conv2d_transpose(tape, h, c4_.w, c4_.b, 2), c4_bn_, mode));
    h = relu(tape, this->apply_bn(
        tape, conv2d_transpose(tape, h, c5_.w, c5_.b, 2), c5_bn_, mode));
    // Output layer keeps ReLU only: the target field is non-negative.
    return relu(tape, conv2d(tape, h, c6_.w, c6_.b, 1, Pad::kSame));
  }

 private:
  struct ResBlock {
    Conv conv1, conv2;
    Bn bn1, bn2;
    Fc se_fc1, se_fc2;
  };

  Value<T> residual(Tape<T>& tape, const Value<T>& x, const ResBlock& b,
                    Mode mode) {
    Value<T> h = relu(tape, this->apply_bn(
        tape, conv2d(tape, x, b.conv1.w, b.conv1.b, 1, Pad::kSame), b.bn1, mode));
    h = this->apply_bn(
        tape, conv2d(tape, h, b.conv2.w, b.conv2.b, 1, Pad::kSame), b.bn2, mode);
    // Squeeze-and-excitation rescale of the branch before the shortcut join.
    Value<T> s = global_avg_pool(tape, h);
    s = relu(tape, fully_connected(tape, s, b.se_fc1.w, b.se_fc1.b));
    s = sigmoid(tape, fully_connected(tape, s, b.se_fc2.w, b.se_fc2.b));
    h = scale_channels(tape, h, s);
    return relu(tape, add(tape, h, x));
  }

  Conv c1_, c2_, c3_, c4_, c5_, c6_;
  Bn c1_bn_, c2_bn_, c3_bn_, c4_bn_, c5_bn_;
  std::vector<ResBlock> blocks_;
};

// ---------------------------------------------------------------------------
// FusionNet: three parallel SCSNet-style encoders over the geometry, load,
// and boundary-condition channel groups, fused at the bottleneck into one
// decoder. Eight convolutional layers in total.
// ---------------------------------------------------------------------------

template <typename T>
class FusionNet : public SurrogateModel<T> {
  using Base = SurrogateModel<T>;
  using typename Base::Conv;
  using typename Base::Fc;

 public:
  explicit FusionNet(ArchitectureConfig cfg) : Base(std::move(cfg)) {
    const auto& w = this->cfg_.widths;
    require(w.size() == 2, "config-mismatch", "fusionnet expects two widths");
    h4_ = this->cfg_.height / 4;
    w4_ = this->cfg_.width / 4;
    flat_ = h4_ * w4_ * w[1];

    enc_geo_ = make_encoder("enc_geo", 1);
    enc_load_ = make_encoder("enc_load", 2);
    enc_bc_ = make_encoder("enc_bc", 2);
    d1_ = this->make_fc("dec.fc1", 3 * kBottleneck, kFcDim);
    d2_ = this->make_fc("dec.fc2", kFcDim, flat_);
    dc1_ = this->make_conv("dec.c1", 3, 3, w[1], w[0], true);
    dc2_ = this->make_conv("dec.c2", 3, 3, w[0], 1, true);
  }

  Value<T> forward(Tape<T>& tape, const ModelInput<T>& in, Mode) override {
    require(in.multi, "arch-input-mismatch",
            "fusionnet needs the five-channel input");
    const int n = in.multi->dim(0);
    Value<T> geo = make_leaf(slice_channels(*in.multi, 0, 1));
    Value<T> load = make_leaf(slice_channels(*in.multi, 1, 2));
    Value<T> bc = make_leaf(slice_channels(*in.multi, 3, 2));

    Value<T> f1 = encode(tape, enc_geo_, geo, n);
    Value<T> f2 = encode(tape, enc_load_, load, n);
    Value<T> f3 = encode(tape, enc_bc_, bc, n);
    Value<T> fr = concat_features(tape, concat_features(tape, f1, f2), f3);

    Value<T> h = relu(tape, fully_connected(tape, fr, d1_.w, d1_.b));
    h = relu(tape, fully_connected(tape, h, d2_.w, d2_.b));
    h = reshape(tape, h, {n, h4_, w4_, this->cfg_.widths[1]});
    h = upsample2x(tape, h);
    h = relu(tape, conv2d(tape, h, dc1_.w, dc1_.b, 1, Pad::kSame));
    h = upsample2x(tape, h);
    return relu(tape, conv2d(tape, h, dc2_.w, dc2_.b, 1, Pad::kSame));
  }

  static constexpr int kFcDim = 1024;
  static constexpr int kBottleneck = 30;

 private:
  struct Encoder {
    Conv c1, c2;
    Fc fc1, fc2;
  };

  Encoder make_encoder(const std::string& prefix, int channels) {
    const auto& w = this->cfg_.widths;
    Encoder e;
    e.c1 = this->make_conv(prefix + ".c1", 3, 3, channels, w[0], true);
    e.c2 = this->make_conv(prefix + ".c2", 3, 3, w[0], w[1], true);
    e.fc1 = this->make_fc(prefix + ".fc1", flat_, kFcDim);
    e.fc2 = this->make_fc(prefix + ".fc2", kFcDim, kBottleneck);
    return e;
  }

  Value<T> encode(Tape<T>& tape, const Encoder& e, const Value<T>& x, int n) {
    Value<T> h = relu(tape, conv2d(tape, x, e.c1.w, e.c1.b, 1, Pad::kSame));
    h = max_pool2x2(tape, h);
    h = relu(tape, conv2d(tape, h, e.c2.w, e.c2.b, 1, Pad::kSame));
    h = max_pool2x2(tape, h);
    h = reshape(tape, h, {n, flat_});
    h = relu(tape, fully_connected(tape, h, e.fc1.w, e.fc1.b));
    return relu(tape, fully_connected(tape, h, e.fc2.w, e.fc2.b));
  }

  int h4_ = 0, w4_ = 0, flat_ = 0;
  Encoder enc_geo_, enc_load_, enc_bc_;
  Fc d1_, d2_;
  Conv dc1_, dc2_;
};

template <typename T>
std::unique_ptr<SurrogateModel<T>> build_model(ArchitectureConfig cfg) {
  cfg.normalize();
  switch (cfg.arch) {
    case ArchId::kScsnet: return std::make_unique<ScsNet<T>>(std::move(cfg));
    case ArchId::kStressnet: return std::make_unique<StressNet<T>>(std::move(cfg));
    case ArchId::kFusionnet: return std::make_unique<FusionNet<T>>(std::move(cfg));
  }
  fail("config-mismatch", "unknown architecture id");
}

}  // namespace stresslab
