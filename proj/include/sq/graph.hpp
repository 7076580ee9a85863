#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sq/calib_types.hpp"
#include "sq/quant.hpp"
#include "sq/smooth.hpp"
#include "sq/tensor.hpp"

namespace sq {

// One pre-LayerNorm transformer block. Both smoothing attachment points
// (the q/k/v projection input and the fc1 input) sit behind a LayerNorm,
// so smoothing factors always have a fusable predecessor.
struct BlockParams {
  LayerNormParams ln1;
  LinearParams q_proj, k_proj, v_proj, out_proj;  // C x C
  LayerNormParams ln2;
  LinearParams fc1;  // C x 4C
  LinearParams fc2;  // 4C x C
};

struct ModelGraph {
  std::vector<BlockParams> blocks;
  std::size_t channels = 0;
  std::size_t head_count = 1;

  std::size_t head_dim() const { return channels / head_count; }
};

void validate_model(const ModelGraph& model);

// weight_outliers injects persistent activation-outlier channels into the
// model itself: a fixed channel set (per seed) gets its LayerNorm gains
// amplified by outlier_scale with the consumer weight rows shrunk to match
// (a scale-imbalanced parameterization of the same function), plus a
// smaller uncompensated set at outlier_scale^0.4. Every forward pass then
// shows the same hard-to-quantize channels, whatever the input.
struct ModelSpec {
  std::size_t blocks = 2;
  std::size_t channels = 128;
  std::size_t heads = 4;
  std::uint64_t seed = 1;
  OutlierSpec weight_outliers{0.0, 1.0, 0};
};

ModelGraph make_synthetic_model(const ModelSpec& spec);

// Stable operator / activation-capture names shared by the precision map,
// calibration results and smoothing plans.
std::string attn_input_key(std::size_t blk);   // q/k/v projection input (attachment point)
std::string ffn_input_key(std::size_t blk);    // fc1 input (attachment point)
std::string attn_q_key(std::size_t blk);       // Q operand of the score BMM
std::string attn_k_key(std::size_t blk);       // K operand of the score BMM
std::string attn_v_key(std::size_t blk);       // V operand of the context BMM
std::string attn_out_key(std::size_t blk);     // out projection input
std::string ffn_fc2_key(std::size_t blk);      // fc2 input

// Per-operator execution tag. Float runs the op in fp32. A quantized tag
// carries explicit activation/weight schemes; when both are compatible with
// outer-dimension rescaling the op runs through the real int8 GEMM,
// otherwise it falls back to fake-quant simulation (the route used for the
// granularities that hardware kernels cannot serve). decompose_threshold
// additionally splits activation outlier channels into a float side path.
struct OpTag {
  bool quantized = false;
  QuantScheme act;
  QuantScheme weight;
  std::optional<float> decompose_threshold;

  static OpTag float_op() { return {}; }
  static OpTag int8(SettingLevel level) {
    const LevelSchemes s = resolve(level);
    return {true, s.activation, s.weight, std::nullopt};
  }
  static OpTag custom(QuantScheme weight, QuantScheme act,
                      std::optional<float> decompose = std::nullopt) {
    return {true, act, weight, decompose};
  }
};

// Exactly one tag per operator in the model. Heavy operators (linears and
// the two attention BMMs) default to int8; LayerNorm, Softmax, GELU and
// residual adds are always float.
struct PrecisionMap {
  std::map<std::string, OpTag> ops;

  static PrecisionMap all_float(const ModelGraph& model);
  static PrecisionMap int8_default(const ModelGraph& model, SettingLevel level);
  static PrecisionMap uniform(const ModelGraph& model, const OpTag& heavy_tag);

  const OpTag& at(const std::string& op) const;
};

// Reference fp32 forward pass; x is [B,T,C] or [T,C].
Tensor forward_fp(const ModelGraph& model, const Tensor& x);

// Quantized forward pass. `plan`, when given, applies smoothing explicitly
// at runtime (activations divided, consumer weights scaled on the fly);
// pass a pre-fused model and no plan for the production path. Static
// activation schemes require `calib`.
Tensor forward_quant(const ModelGraph& model, const Tensor& x, const PrecisionMap& pmap,
                     const SmoothingPlan* plan = nullptr, const CalibResult* calib = nullptr);

// fp32 forward that reports every quantizable operator input to `observe`;
// this is the capture hook the calibration pass runs on.
using ActivationObserver = std::function<void(const std::string& key, const Tensor& value)>;
Tensor forward_observed(const ModelGraph& model, const Tensor& x,
                        const ActivationObserver& observe);

// Folds plan factors into the preceding LayerNorms and scales the consumer
// weight rows; returns a new model, the input is untouched.
ModelGraph attach_smoothing(const ModelGraph& model, const SmoothingPlan& plan);

struct ErrorReportRow {
  std::string name;
  double mse = 0.0;
  double max_rel = 0.0;
  double l2_rel = 0.0;
};

struct ReportConfig {
  std::string name;
  PrecisionMap pmap;
  std::optional<SmoothingPlan> plan;
  std::optional<CalibResult> calib;
};

// forward_quant vs forward_fp error per config, averaged over the inputs.
std::vector<ErrorReportRow> output_error_report(const ModelGraph& model,
                                                const std::vector<Tensor>& inputs,
                                                const std::vector<ReportConfig>& configs);

}  // namespace sq
