#pragma once

#include "axrec/encoding.hpp"
#include "axrec/nn.hpp"

namespace axrec {

struct Condition {
    Vec vector;
    bool is_null = false;
};

// Strided conv tower + global average pool + linear head. Inputs are [0,1]
// images, shifted to [-1,1] internally.
class ImageEncoder {
  public:
    ImageEncoder() = default;
    ImageEncoder(int base_channels, int out_dim, Rng& rng);

    Vec forward(const Image& img01);
    void backward(const Vec& dout);
    void collect(const std::string& prefix, nn::ParamRefs& out);
    int out_dim() const { return head_.out_dim(); }

  private:
    std::vector<nn::Conv2d> convs_;
    std::vector<nn::SiLUMap> acts_;
    nn::Linear head_;
    int pooled_channels_ = 0;
    Eigen::Index pooled_pixels_ = 0;
};

struct CondEncoderConfig {
    int img_base_channels = 8;
    int img_out_dim = 128;   // C_img
    int pos_hidden = 128;
    int pos_out_dim = 128;   // C_pos
    bool encode_prior = false;  // extra image branch for the INR output
};

// E_img / E_pos pair plus the learned null token, trained jointly with the
// denoiser.
class ConditionEncoders {
  public:
    ConditionEncoders() = default;
    ConditionEncoders(const CondEncoderConfig& cfg, int pos_in_dim, std::uint64_t seed);

    // c = E_img(X_z) (+) E_pos(p(z)) [(+) E_prior(m_inr)]
    Condition build(const Image& x_proj, const Vec& pos_encoding, const Image* m_inr = nullptr);
    Condition null_condition() const;

    // Routes d(loss)/d(c) to the branch that produced the last build(),
    // or to the null token when the condition was dropped.
    void backward(const Condition& c, const Vec& dc);

    nn::ParamRefs params();
    int cond_dim() const { return cond_dim_; }
    const CondEncoderConfig& config() const { return cfg_; }

  private:
    CondEncoderConfig cfg_;
    ImageEncoder img_enc_;
    ImageEncoder prior_enc_;  // used only when cfg_.encode_prior
    nn::Linear pos_fc1_, pos_fc2_;
    nn::SiLU pos_act_;
    nn::Param null_token_;
    int cond_dim_ = 0;
};

// c -> null token with probability p_uncond; deterministic given rng state.
Condition drop_condition(const Condition& c, const Condition& null_cond, double p_uncond, Rng& rng);

}  // namespace axrec
