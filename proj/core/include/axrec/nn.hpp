#pragma once

#include <map>
#include <string>
#include <vector>

#include "axrec/common.hpp"

namespace axrec::nn {

struct Param {
    Mat w;  // value
    Mat g;  // accumulated gradient, same shape
    void init(int rows, int cols) { w.setZero(rows, cols); g.setZero(rows, cols); }
    void zero_grad() { g.setZero(); }
};

struct ParamRef {
    std::string name;
    Param* p;
};
using ParamRefs = std::vector<ParamRef>;

void zero_grads(const ParamRefs& params);
std::size_t param_count(const ParamRefs& params);
std::uint64_t params_hash(const ParamRefs& params);

// Raw little-endian doubles in registration order; caller owns the framing.
void serialize_params(const ParamRefs& params, std::vector<double>& out);
void deserialize_params(const ParamRefs& params, const std::vector<double>& in);

class Adam {
  public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    // Applies one update using p->g scaled by grad_scale (e.g. 1/batch).
    void step(const ParamRefs& params, double grad_scale = 1.0);

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

  private:
    double lr_, b1_, b2_, eps_;
    int t_ = 0;
    std::map<Param*, std::pair<Mat, Mat>> state_;  // first/second moment
};

// ---- dense layers (batch-major: rows = samples) ----------------------------

class Linear {
  public:
    Linear() = default;
    // He-style init scaled for smooth activations; scale<0 picks the default.
    Linear(int in, int out, Rng& rng, double scale = -1.0);

    Mat forward(const Mat& x);       // x: B x in -> B x out
    Mat backward(const Mat& dy);     // accumulates into grads, returns dx
    void collect(const std::string& prefix, ParamRefs& out);

    int in_dim() const { return static_cast<int>(W.w.cols()); }
    int out_dim() const { return static_cast<int>(W.w.rows()); }

    Param W;  // out x in
    Param b;  // out x 1

  private:
    Mat x_;
};

struct SiLU {
    Mat forward(const Mat& x);
    Mat backward(const Mat& dy) const;
    Mat x_;
};

struct Sigmoid {
    Mat forward(const Mat& x);
    Mat backward(const Mat& dy) const;
    Mat y_;
};

// ---- 2D feature maps (single sample: rows = channels, cols = H*W) ----------

struct FMap {
    Mat data;
    int h = 0, w = 0;
    int channels() const { return static_cast<int>(data.rows()); }
    static FMap zeros(int c, int h, int w) { return FMap{Mat::Zero(c, static_cast<Eigen::Index>(h) * w), h, w}; }
    static FMap from_image(const Image& img);
    Image to_image(int channel = 0) const;
};

class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(int cin, int cout, int ksize, int stride, int pad, Rng& rng, double scale = -1.0);

    FMap forward(const FMap& x);
    FMap backward(const FMap& dy);
    void collect(const std::string& prefix, ParamRefs& out);

    Param W;  // cout x (cin*k*k)
    Param b;  // cout x 1

  private:
    int cin_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    int hin_ = 0, win_ = 0, hout_ = 0, wout_ = 0;
    Mat cols_;  // cached im2col of the last input
};

// Per-channel normalization over spatial positions with learned gain/bias.
class ChannelNorm {
  public:
    ChannelNorm() = default;
    explicit ChannelNorm(int channels);

    FMap forward(const FMap& x);
    FMap backward(const FMap& dy);
    void collect(const std::string& prefix, ParamRefs& out);

    Param gain, bias;  // channels x 1

  private:
    Mat xhat_;
    Vec inv_std_;
};

struct SiLUMap {
    FMap forward(const FMap& x);
    FMap backward(const FMap& dy) const;
    Mat x_;
};

class AvgPool2 {
  public:
    FMap forward(const FMap& x);
    FMap backward(const FMap& dy) const;

  private:
    int hin_ = 0, win_ = 0;
};

class UpsampleNearest2 {
  public:
    FMap forward(const FMap& x);
    FMap backward(const FMap& dy) const;

  private:
    int hin_ = 0, win_ = 0;
};

// Sinusoidal timestep features, fixed (no parameters).
Vec timestep_embedding(int t, int dim);

}  // namespace axrec::nn
