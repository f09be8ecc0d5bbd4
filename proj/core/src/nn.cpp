#include "axrec/nn.hpp"

namespace axrec::nn {

void zero_grads(const ParamRefs& params) {
    for (auto& pr : params) pr.p->zero_grad();
}

std::size_t param_count(const ParamRefs& params) {
    std::size_t n = 0;
    for (auto& pr : params) n += static_cast<std::size_t>(pr.p->w.size());
    return n;
}

std::uint64_t params_hash(const ParamRefs& params) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (auto& pr : params) {
        h = fnv1a(pr.name.data(), pr.name.size(), h);
        h = fnv1a(pr.p->w.data(), static_cast<std::size_t>(pr.p->w.size()) * sizeof(double), h);
    }
    return h;
}

void serialize_params(const ParamRefs& params, std::vector<double>& out) {
    out.clear();
    out.reserve(param_count(params));
    for (auto& pr : params)
        out.insert(out.end(), pr.p->w.data(), pr.p->w.data() + pr.p->w.size());
}

void deserialize_params(const ParamRefs& params, const std::vector<double>& in) {
    if (in.size() != param_count(params)) throw Error("parameter blob size mismatch");
    std::size_t off = 0;
    for (auto& pr : params) {
        std::copy(in.begin() + off, in.begin() + off + pr.p->w.size(), pr.p->w.data());
        off += static_cast<std::size_t>(pr.p->w.size());
    }
}

void Adam::step(const ParamRefs& params, double grad_scale) {
    ++t_;
    double bc1 = 1.0 - std::pow(b1_, t_);
    double bc2 = 1.0 - std::pow(b2_, t_);
    for (auto& pr : params) {
        auto& [m, v] = state_[pr.p];
        if (m.size() == 0) {
            m = Mat::Zero(pr.p->w.rows(), pr.p->w.cols());
            v = Mat::Zero(pr.p->w.rows(), pr.p->w.cols());
        }
        Mat g = grad_scale * pr.p->g;
        m = b1_ * m + (1.0 - b1_) * g;
        v = b2_ * v + (1.0 - b2_) * g.cwiseProduct(g);
        pr.p->w -= (lr_ / bc1) * m.cwiseQuotient(((v / bc2).cwiseSqrt().array() + eps_).matrix());
    }
}

// ---- Linear -----------------------------------------------------------------

Linear::Linear(int in, int out, Rng& rng, double scale) {
    W.init(out, in);
    b.init(out, 1);
    double s = scale >= 0.0 ? scale : std::sqrt(2.0 / in);
    for (Eigen::Index i = 0; i < W.w.size(); ++i) W.w.data()[i] = s * rng.gaussian();
}

Mat Linear::forward(const Mat& x) {
    x_ = x;
    return (x * W.w.transpose()).rowwise() + b.w.col(0).transpose();
}

Mat Linear::backward(const Mat& dy) {
    W.g += dy.transpose() * x_;
    b.g.col(0) += dy.colwise().sum().transpose();
    return dy * W.w;
}

void Linear::collect(const std::string& prefix, ParamRefs& out) {
    out.push_back({prefix + ".W", &W});
    out.push_back({prefix + ".b", &b});
}

// ---- activations ------------------------------------------------------------

namespace {
inline double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Mat SiLU::forward(const Mat& x) {
    x_ = x;
    return x.unaryExpr([](double v) { return v * sigmoid_scalar(v); });
}

Mat SiLU::backward(const Mat& dy) const {
    Mat dx = x_.unaryExpr([](double v) {
        double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
    });
    return dy.cwiseProduct(dx);
}

Mat Sigmoid::forward(const Mat& x) {
    y_ = x.unaryExpr([](double v) { return sigmoid_scalar(v); });
    return y_;
}

Mat Sigmoid::backward(const Mat& dy) const {
    return dy.cwiseProduct(y_.cwiseProduct((1.0 - y_.array()).matrix()));
}

// ---- feature maps -----------------------------------------------------------

FMap FMap::from_image(const Image& img) {
    FMap f;
    f.h = static_cast<int>(img.rows());
    f.w = static_cast<int>(img.cols());
    f.data.resize(1, static_cast<Eigen::Index>(f.h) * f.w);
    for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x) f.data(0, static_cast<Eigen::Index>(y) * f.w + x) = img(y, x);
    return f;
}

Image FMap::to_image(int channel) const {
    Image img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img(y, x) = data(channel, static_cast<Eigen::Index>(y) * w + x);
    return img;
}

// ---- Conv2d -----------------------------------------------------------------

Conv2d::Conv2d(int cin, int cout, int ksize, int stride, int pad, Rng& rng, double scale)
    : cin_(cin), k_(ksize), stride_(stride), pad_(pad) {
    W.init(cout, cin * ksize * ksize);
    b.init(cout, 1);
    double s = scale >= 0.0 ? scale : std::sqrt(2.0 / (cin * ksize * ksize));
    for (Eigen::Index i = 0; i < W.w.size(); ++i) W.w.data()[i] = s * rng.gaussian();
}

FMap Conv2d::forward(const FMap& x) {
    hin_ = x.h;
    win_ = x.w;
    hout_ = (hin_ + 2 * pad_ - k_) / stride_ + 1;
    wout_ = (win_ + 2 * pad_ - k_) / stride_ + 1;
    cols_.setZero(static_cast<Eigen::Index>(cin_) * k_ * k_, static_cast<Eigen::Index>(hout_) * wout_);
    for (int oy = 0; oy < hout_; ++oy)
        for (int ox = 0; ox < wout_; ++ox) {
            Eigen::Index col = static_cast<Eigen::Index>(oy) * wout_ + ox;
            for (int ky = 0; ky < k_; ++ky) {
                int iy = oy * stride_ + ky - pad_;
                if (iy < 0 || iy >= hin_) continue;
                for (int kx = 0; kx < k_; ++kx) {
                    int ix = ox * stride_ + kx - pad_;
                    if (ix < 0 || ix >= win_) continue;
                    Eigen::Index src = static_cast<Eigen::Index>(iy) * win_ + ix;
                    for (int c = 0; c < cin_; ++c)
                        cols_((static_cast<Eigen::Index>(c) * k_ + ky) * k_ + kx, col) = x.data(c, src);
                }
            }
        }
    FMap y;
    y.h = hout_;
    y.w = wout_;
    y.data = (W.w * cols_).colwise() + b.w.col(0);
    return y;
}

FMap Conv2d::backward(const FMap& dy) {
    W.g += dy.data * cols_.transpose();
    b.g.col(0) += dy.data.rowwise().sum();
    Mat dcols = W.w.transpose() * dy.data;
    FMap dx = FMap::zeros(cin_, hin_, win_);
    for (int oy = 0; oy < hout_; ++oy)
        for (int ox = 0; ox < wout_; ++ox) {
            Eigen::Index col = static_cast<Eigen::Index>(oy) * wout_ + ox;
            for (int ky = 0; ky < k_; ++ky) {
                int iy = oy * stride_ + ky - pad_;
                if (iy < 0 || iy >= hin_) continue;
                for (int kx = 0; kx < k_; ++kx) {
                    int ix = ox * stride_ + kx - pad_;
                    if (ix < 0 || ix >= win_) continue;
                    Eigen::Index dst = static_cast<Eigen::Index>(iy) * win_ + ix;
                    for (int c = 0; c < cin_; ++c)
                        dx.data(c, dst) += dcols((static_cast<Eigen::Index>(c) * k_ + ky) * k_ + kx, col);
                }
            }
        }
    return dx;
}

void Conv2d::collect(const std::string& prefix, ParamRefs& out) {
    out.push_back({prefix + ".W", &W});
    out.push_back({prefix + ".b", &b});
}

// ---- ChannelNorm ------------------------------------------------------------

ChannelNorm::ChannelNorm(int channels) {
    gain.init(channels, 1);
    bias.init(channels, 1);
    gain.w.setOnes();
}

FMap ChannelNorm::forward(const FMap& x) {
    const double eps = 1e-5;
    Eigen::Index n = x.data.cols();
    Vec mean = x.data.rowwise().mean();
    Mat centered = x.data.colwise() - mean;
    Vec var = centered.cwiseProduct(centered).rowwise().mean();
    inv_std_ = (var.array() + eps).rsqrt().matrix();
    xhat_ = centered.array().colwise() * inv_std_.array();
    FMap y{Mat((xhat_.array().colwise() * gain.w.col(0).array()).colwise() + bias.w.col(0).array()),
           x.h, x.w};
    (void)n;
    return y;
}

FMap ChannelNorm::backward(const FMap& dy) {
    Eigen::Index n = dy.data.cols();
    gain.g.col(0) += dy.data.cwiseProduct(xhat_).rowwise().sum();
    bias.g.col(0) += dy.data.rowwise().sum();
    Mat dxhat = dy.data.array().colwise() * gain.w.col(0).array();
    Vec sum_dxhat = dxhat.rowwise().sum();
    Vec sum_dxhat_xhat = dxhat.cwiseProduct(xhat_).rowwise().sum();
    Mat dx = (dxhat * static_cast<double>(n)).colwise() - sum_dxhat;
    dx.array() -= xhat_.array().colwise() * sum_dxhat_xhat.array();
    dx.array().colwise() *= (inv_std_.array() / static_cast<double>(n));
    return FMap{std::move(dx), dy.h, dy.w};
}

void ChannelNorm::collect(const std::string& prefix, ParamRefs& out) {
    out.push_back({prefix + ".gain", &gain});
    out.push_back({prefix + ".bias", &bias});
}

// ---- SiLUMap ----------------------------------------------------------------

FMap SiLUMap::forward(const FMap& x) {
    x_ = x.data;
    return FMap{x.data.unaryExpr([](double v) { return v * sigmoid_scalar(v); }), x.h, x.w};
}

FMap SiLUMap::backward(const FMap& dy) const {
    Mat dx = x_.unaryExpr([](double v) {
        double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
    });
    return FMap{dy.data.cwiseProduct(dx), dy.h, dy.w};
}

// ---- pooling / upsampling ---------------------------------------------------

FMap AvgPool2::forward(const FMap& x) {
    hin_ = x.h;
    win_ = x.w;
    int ho = x.h / 2, wo = x.w / 2;
    FMap y = FMap::zeros(x.channels(), ho, wo);
    for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
            Eigen::Index dst = static_cast<Eigen::Index>(oy) * wo + ox;
            y.data.col(dst) = 0.25 * (x.data.col(static_cast<Eigen::Index>(2 * oy) * x.w + 2 * ox) +
                                      x.data.col(static_cast<Eigen::Index>(2 * oy) * x.w + 2 * ox + 1) +
                                      x.data.col(static_cast<Eigen::Index>(2 * oy + 1) * x.w + 2 * ox) +
                                      x.data.col(static_cast<Eigen::Index>(2 * oy + 1) * x.w + 2 * ox + 1));
        }
    return y;
}

FMap AvgPool2::backward(const FMap& dy) const {
    FMap dx = FMap::zeros(dy.channels(), hin_, win_);
    for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox) {
            Eigen::Index src = static_cast<Eigen::Index>(oy) * dy.w + ox;
            for (int dy2 = 0; dy2 < 2; ++dy2)
                for (int dx2 = 0; dx2 < 2; ++dx2)
                    dx.data.col(static_cast<Eigen::Index>(2 * oy + dy2) * win_ + 2 * ox + dx2) =
                        0.25 * dy.data.col(src);
        }
    return dx;
}

FMap UpsampleNearest2::forward(const FMap& x) {
    hin_ = x.h;
    win_ = x.w;
    FMap y = FMap::zeros(x.channels(), x.h * 2, x.w * 2);
    for (int oy = 0; oy < y.h; ++oy)
        for (int ox = 0; ox < y.w; ++ox)
            y.data.col(static_cast<Eigen::Index>(oy) * y.w + ox) =
                x.data.col(static_cast<Eigen::Index>(oy / 2) * x.w + ox / 2);
    return y;
}

FMap UpsampleNearest2::backward(const FMap& dy) const {
    FMap dx = FMap::zeros(dy.channels(), hin_, win_);
    for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox)
            dx.data.col(static_cast<Eigen::Index>(oy / 2) * win_ + ox / 2) +=
                dy.data.col(static_cast<Eigen::Index>(oy) * dy.w + ox);
    return dx;
}

Vec timestep_embedding(int t, int dim) {
    Vec e(dim);
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        e(i) = std::sin(t * freq);
        e(half + i) = std::cos(t * freq);
    }
    if (dim % 2 == 1) e(dim - 1) = 0.0;
    return e;
}

}  // namespace axrec::nn
