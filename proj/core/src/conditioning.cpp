#include "axrec/conditioning.hpp"

namespace axrec {

ImageEncoder::ImageEncoder(int base_channels, int out_dim, Rng& rng) {
    int cin = 1;
    int c = base_channels;
    for (int i = 0; i < 4; ++i) {  // 4 stride-2 blocks
        convs_.emplace_back(cin, c, 3, 2, 1, rng);
        cin = c;
        c *= 2;
    }
    acts_.resize(convs_.size());
    pooled_channels_ = cin;
    head_ = nn::Linear(cin, out_dim, rng);
}

Vec ImageEncoder::forward(const Image& img01) {
    nn::FMap f = nn::FMap::from_image(img01);
    f.data = 2.0 * f.data.array() - 1.0;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        f = convs_[i].forward(f);
        f = acts_[i].forward(f);
    }
    pooled_pixels_ = f.data.cols();
    Mat pooled = f.data.rowwise().mean().transpose();  // 1 x C
    return head_.forward(pooled).row(0).transpose();
}

void ImageEncoder::backward(const Vec& dout) {
    Mat dpooled = head_.backward(dout.transpose());  // 1 x C
    nn::FMap df;
    df.data = (dpooled.row(0).transpose() / static_cast<double>(pooled_pixels_))
                  .replicate(1, pooled_pixels_);
    // spatial dims recovered by each conv's own cache; h/w only matter for shape
    for (std::size_t i = convs_.size(); i-- > 0;) {
        df = acts_[i].backward(df);
        df = convs_[i].backward(df);
    }
}

void ImageEncoder::collect(const std::string& prefix, nn::ParamRefs& out) {
    for (std::size_t i = 0; i < convs_.size(); ++i)
        convs_[i].collect(prefix + ".conv" + std::to_string(i), out);
    head_.collect(prefix + ".head", out);
}

ConditionEncoders::ConditionEncoders(const CondEncoderConfig& cfg, int pos_in_dim,
                                     std::uint64_t seed)
    : cfg_(cfg) {
    Rng rng(seed ^ 0xC04D17104E5C0DE5ULL);
    img_enc_ = ImageEncoder(cfg.img_base_channels, cfg.img_out_dim, rng);
    pos_fc1_ = nn::Linear(pos_in_dim, cfg.pos_hidden, rng);
    pos_fc2_ = nn::Linear(cfg.pos_hidden, cfg.pos_out_dim, rng);
    cond_dim_ = cfg.img_out_dim + cfg.pos_out_dim;
    if (cfg.encode_prior) {
        prior_enc_ = ImageEncoder(cfg.img_base_channels, cfg.img_out_dim, rng);
        cond_dim_ += cfg.img_out_dim;
    }
    null_token_.init(cond_dim_, 1);
    for (Eigen::Index i = 0; i < cond_dim_; ++i) null_token_.w(i, 0) = 0.02 * rng.gaussian();
}

Condition ConditionEncoders::build(const Image& x_proj, const Vec& pos_encoding,
                                   const Image* m_inr) {
    Vec img = img_enc_.forward(x_proj);
    Mat h = pos_fc1_.forward(pos_encoding.transpose());
    Vec pos = pos_fc2_.forward(pos_act_.forward(h)).row(0).transpose();
    Condition c;
    c.vector.resize(cond_dim_);
    c.vector.head(cfg_.img_out_dim) = img;
    c.vector.segment(cfg_.img_out_dim, cfg_.pos_out_dim) = pos;
    if (cfg_.encode_prior) {
        if (!m_inr) throw Error("condition: prior image required in condition_concat mode");
        c.vector.tail(cfg_.img_out_dim) = prior_enc_.forward(*m_inr);
    }
    return c;
}

Condition ConditionEncoders::null_condition() const {
    return Condition{null_token_.w.col(0), true};
}

void ConditionEncoders::backward(const Condition& c, const Vec& dc) {
    if (c.is_null) {
        null_token_.g.col(0) += dc;
        return;
    }
    img_enc_.backward(dc.head(cfg_.img_out_dim));
    Mat dpos = pos_fc2_.backward(dc.segment(cfg_.img_out_dim, cfg_.pos_out_dim).transpose());
    pos_fc1_.backward(pos_act_.backward(dpos));
    if (cfg_.encode_prior) prior_enc_.backward(dc.tail(cfg_.img_out_dim));
}

nn::ParamRefs ConditionEncoders::params() {
    nn::ParamRefs refs;
    img_enc_.collect("cond.img", refs);
    pos_fc1_.collect("cond.pos.fc1", refs);
    pos_fc2_.collect("cond.pos.fc2", refs);
    if (cfg_.encode_prior) prior_enc_.collect("cond.prior", refs);
    refs.push_back({"cond.null_token", &null_token_});
    return refs;
}

Condition drop_condition(const Condition& c, const Condition& null_cond, double p_uncond,
                         Rng& rng) {
    if (p_uncond < 0.0 || p_uncond > 1.0) throw ConfigError("p_uncond must be in [0,1]");
    if (p_uncond > 0.0 && rng.uniform() < p_uncond) return null_cond;
    return c;
}

}  // namespace axrec
