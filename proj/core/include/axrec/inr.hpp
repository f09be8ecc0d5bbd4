#pragma once

#include <functional>

#include "axrec/encoding.hpp"
#include "axrec/nn.hpp"
#include "axrec/volume.hpp"

namespace axrec {

// Gaussian weight of the k-th neighboring slice, k in [1,n]:
//   g_k = exp(-((k/n - 0.5)^2)/2) / sqrt(2*pi)
// centered_offsets swaps the literal k/n for the symmetric (k-0.5)/n reading.
double neighbor_weight(int k, int n, bool centered_offsets = false);

enum class PriorWeighting {
    neighboring,     // normalized Gaussian weights over the n-slice window
    uniform_mean,    // 1/n each
    no_neighboring,  // single-slice window (direct render at z)
};

PriorWeighting prior_weighting_from_string(const std::string& s);
std::string to_string(PriorWeighting w);

// Plain MLP over batches (rows = samples), smooth nonlinearity, optional
// sigmoid head.
class Mlp {
  public:
    Mlp() = default;
    Mlp(const std::vector<int>& dims, Rng& rng, bool sigmoid_output);

    Mat forward(const Mat& x);
    Mat backward(const Mat& dy);
    void collect(const std::string& prefix, nn::ParamRefs& out);
    const std::vector<int>& dims() const { return dims_; }
    bool sigmoid_output() const { return sigmoid_out_; }

  private:
    std::vector<int> dims_;
    std::vector<nn::Linear> layers_;
    std::vector<nn::SiLU> acts_;
    nn::Sigmoid out_act_;
    bool sigmoid_out_ = true;
};

// Coordinate -> intensity field with a frozen positional encoding.
class InrField {
  public:
    InrField() = default;
    InrField(Encoding enc, const std::vector<int>& hidden, std::uint64_t seed);

    // values in [0,1], one per coordinate row
    Vec evaluate(const Mat& coords);
    // backward pass for external losses: dvalues has one entry per row
    void backward(const Vec& dvalues);

    Image render_slice(double z, int height, int width);

    nn::ParamRefs params();
    std::uint64_t params_hash();

    const Encoding& encoding() const { return enc_; }
    Mlp& mlp() { return mlp_; }
    bool trained = false;
    std::vector<double> loss_history;

    void save(const std::string& path) const;
    static InrField load(const std::string& path);

  private:
    Encoding enc_;
    Mlp mlp_;
    mutable nn::ParamRefs param_cache_;
};

struct InrTrainConfig {
    double learning_rate = 1e-3;
    int epochs = 500;
    int batch_projections = 1;   // projections per optimizer step
    int pixels_per_step = 256;   // lateral pixels sampled per projection; 0 = full grid
    std::uint64_t seed = 0;
    // progress callback: (epoch, loss); optional
    std::function<void(int, double)> on_epoch;
};

// Eq.-faithful training loss over the whole stack:
//   sum_i MSE( (1/n) sum_k f(grid, z_{i,k}), X_i )
double inr_loss(InrField& f, const ProjectionStack& stack);

// Same loss restricted to given lateral pixel indices (training subsample);
// when accumulate_grads, leaves d(loss)/d(params) in the field's grads.
double inr_loss_partial(InrField& f, const ProjectionStack& stack,
                        const std::vector<int>& projection_indices,
                        const std::vector<int>& pixel_indices, bool accumulate_grads);

// Adam on the projection-consistency objective; deterministic given cfg.seed. Throws on
// divergence (non-finite loss). epochs=0 returns the field untouched.
InrField train_inr(const ProjectionStack& stack, const Encoding& enc, const InrTrainConfig& cfg);

// Gaussian-weighted n-slice window around z (the acquisition sub-volume
// containing z, clamped at volume ends). Output in [0,1].
Image infer_prior(InrField& f, double z, int n, int source_depth, int height, int width,
                  PriorWeighting weighting = PriorWeighting::neighboring,
                  bool centered_offsets = false);

}  // namespace axrec
