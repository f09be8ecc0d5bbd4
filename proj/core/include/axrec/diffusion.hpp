#pragma once

#include <memory>

#include "axrec/conditioning.hpp"
#include "axrec/inr.hpp"
#include "axrec/volume.hpp"

namespace axrec {

// ---- noise schedule ---------------------------------------------------------

struct NoiseSchedule {
    int T = 1000;
    std::vector<double> betas;       // beta_1..beta_T at index t-1
    std::vector<double> alphas_bar;  // abar_t at index t-1

    double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
    double abar(int t) const { return t == 0 ? 1.0 : alphas_bar.at(static_cast<std::size_t>(t - 1)); }

    static NoiseSchedule linear(int T = 1000, double beta_start = 1e-4, double beta_end = 2e-2);
    void validate() const;
};

// X_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps; x0 in the model domain [-1,1].
Image forward_noise(const Image& x0, int t, const NoiseSchedule& sched, const Image& eps);

// X_t' = gamma*m_inr + (1-gamma)*x_t, pixelwise.
Image apply_prior(const Image& x_t, const Image& m_inr, double gamma);

// [0,1] <-> model domain
inline Image to_model_domain(const Image& x01) { return 2.0 * x01.array() - 1.0; }
inline Image from_model_domain(const Image& xm) {
    return ((xm.array() + 1.0) * 0.5).cwiseMax(0.0).cwiseMin(1.0);
}

// ---- guidance / prior configuration ------------------------------------------

enum class PredictionTarget { epsilon, x0 };
enum class FusionMode { addition, cross_attention, none };
enum class PriorMode { neighboring, uniform_mean, no_neighboring, condition_concat, off };

PredictionTarget prediction_target_from_string(const std::string& s);
FusionMode fusion_mode_from_string(const std::string& s);
PriorMode prior_mode_from_string(const std::string& s);
std::string to_string(PredictionTarget t);
std::string to_string(FusionMode m);
std::string to_string(PriorMode m);

struct GuidanceConfig {
    double w = 1.0;          // guidance strength omega
    double gamma = 0.1;      // INR interpolation rate, [0, 1)
    double p_uncond = 0.1;
    PredictionTarget prediction_target = PredictionTarget::epsilon;
    PriorMode prior_mode = PriorMode::neighboring;
    FusionMode fusion = FusionMode::addition;
    bool centered_offsets = false;  // half-step index reading for the prior window
    bool literal_alg2 = false;      // X_{t-1} = X_t - eps update, for comparison
    int inference_steps = 100;      // uniform subsample of the T train steps

    // throws on invalid fields; clamps gamma above 0.99 down to 0.99
    void validate();
    // gamma that is actually applied (prior-less modes force 0)
    double effective_gamma() const {
        return (prior_mode == PriorMode::off || prior_mode == PriorMode::condition_concat) ? 0.0 : gamma;
    }
    bool uses_prior_image() const { return prior_mode != PriorMode::off; }
};

// ---- denoiser ---------------------------------------------------------------

struct DenoiserConfig {
    int base_channels = 16;
    int time_embed_dim = 64;
    int cond_dim = 256;
    FusionMode fusion = FusionMode::addition;
};

// Two-token single-head cross-attention from pixel queries to the condition
// (split into image-half and position-half tokens).
class CrossAttention {
  public:
    CrossAttention() = default;
    CrossAttention(int channels, int cond_dim, int head_dim, Rng& rng);

    nn::FMap forward(const nn::FMap& x, const Vec& cond);
    nn::FMap backward(const nn::FMap& dy, Vec& dcond);
    void collect(const std::string& prefix, nn::ParamRefs& out);

  private:
    nn::Linear tok1_, tok2_, wq_, wk_, wv_, wo_;
    int cond_dim_ = 0, head_dim_ = 0;
    Mat q_, k_, v_, attn_, tok_;
    Vec cond_cache_;
};

// conv-norm-act x2 with residual skip; time embedding and condition are
// projected per-channel and added at the block output.
class ResBlock {
  public:
    ResBlock() = default;
    ResBlock(int cin, int cout, int time_dim, int cond_dim, FusionMode fusion, Rng& rng);

    nn::FMap forward(const nn::FMap& x, const Vec& temb, const Condition& cond);
    nn::FMap backward(const nn::FMap& dy, Vec& dtemb, Vec& dcond);
    void collect(const std::string& prefix, nn::ParamRefs& out);

  private:
    nn::ChannelNorm n1_, n2_;
    nn::SiLUMap a1_, a2_;
    nn::Conv2d c1_, c2_;
    nn::Conv2d skip_;
    bool has_skip_ = false;
    nn::Linear t_proj_, c_proj_;
    CrossAttention xattn_;
    FusionMode fusion_ = FusionMode::addition;
    nn::FMap x_cache_;
};

// Small 2-level UNet on [H,W] single-channel images, no attention by
// default; conditioning injected at every ResBlock output.
class Denoiser {
  public:
    Denoiser() = default;
    Denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

    Image forward(const Image& x, int t, const Condition& cond);
    // dloss/dx is discarded (inputs are data, not parameters); dcond returned
    Vec backward(const Image& dout);
    void collect(nn::ParamRefs& out);
    const DenoiserConfig& config() const { return cfg_; }

  private:
    DenoiserConfig cfg_;
    nn::Conv2d in_conv_;
    ResBlock enc0_, enc1_, mid_, dec0_;
    nn::AvgPool2 down_;
    nn::UpsampleNearest2 up_;
    nn::ChannelNorm out_norm_;
    nn::SiLUMap out_act_;
    nn::Conv2d out_conv_;
    nn::Linear t_fc1_, t_fc2_;
    nn::SiLU t_act_;
    int enc0_channels_ = 0;
    Condition cond_cache_;
};

// ---- bundled model ----------------------------------------------------------

struct DiffusionTrainConfig {
    double learning_rate = 2e-4;
    int epochs = 300;
    int batch_slices = 8;
    std::uint64_t seed = 0;
    std::function<void(int, double)> on_epoch;
};

class DiffusionModel {
  public:
    DiffusionModel() = default;
    DiffusionModel(const DenoiserConfig& dcfg, const CondEncoderConfig& ccfg, int pos_in_dim,
                   const NoiseSchedule& sched, const GuidanceConfig& gcfg, std::uint64_t seed);

    Denoiser& denoiser() { return denoiser_; }
    ConditionEncoders& encoders() { return encoders_; }
    const NoiseSchedule& schedule() const { return sched_; }
    GuidanceConfig& guidance() { return gcfg_; }
    const GuidanceConfig& guidance() const { return gcfg_; }

    nn::ParamRefs params();
    std::uint64_t params_hash();

    std::string inr_checkpoint_hash;  // identifies the frozen prior field
    std::vector<double> loss_history;

    void save(const std::string& path) const;
    static DiffusionModel load(const std::string& path);

  private:
    DenoiserConfig dcfg_;
    CondEncoderConfig ccfg_;
    int pos_in_dim_ = 0;
    NoiseSchedule sched_;
    GuidanceConfig gcfg_;
    Denoiser denoiser_;
    ConditionEncoders encoders_;
};

// One training sample, prepared by the caller (priors precomputed once
// against the frozen INR).
struct TrainSample {
    Image x0;      // ground-truth slice, [0,1]
    Image x_proj;  // nearest projection, [0,1]
    double z = 0.0;
    int t = 1;
    Image eps;     // unit normals, same shape as x0
    Image m_inr;   // prior slice, [0,1]; ignored when prior mode == off
};

// Algorithm-1 step over a batch: builds conditions (with p_uncond dropout),
// noises, interpolates the prior, accumulates gradients into the model.
// Returns the mean per-pixel loss. Caller owns the optimizer step.
// Descending uniform subsample of {1..T}, always ending at 1.
std::vector<int> inference_timesteps(int T, int steps);

double train_step(DiffusionModel& model, const Encoding& pos_encoding,
                  const std::vector<TrainSample>& batch, Rng& drop_rng);

// Algorithm-2 ancestral sampling of one slice. m_inr may be empty when the
// prior mode is off. Deterministic given rng.
Image sample_slice(DiffusionModel& model, const Encoding& pos_encoding, const Image& x_proj,
                   double z, const Image& m_inr, Rng& rng);

// Slice-by-slice reconstruction; per-slice rng streams derived from seed.
Volume reconstruct_volume(DiffusionModel& model, const Encoding& pos_encoding, InrField* f_inr,
                          const ProjectionStack& stack, int depth_out, std::uint64_t seed);

// Training driver: supervises on ground-truth slices of `truth`, conditions
// on `stack`, uses the frozen `f_inr` for priors. Deterministic given seed.
void train_diffusion(DiffusionModel& model, const Encoding& pos_encoding, InrField* f_inr,
                     const Volume& truth, const ProjectionStack& stack,
                     const DiffusionTrainConfig& cfg);

// Prior image for slice z per the model's prior mode (empty Image for off).
Image prior_for(DiffusionModel& model, InrField* f_inr, double z, const ProjectionStack& stack,
                int height, int width);

}  // namespace axrec
