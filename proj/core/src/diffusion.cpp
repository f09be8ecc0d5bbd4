#include "axrec/diffusion.hpp"

#include <algorithm>
#include <numeric>

#include "axrec/checkpoint.hpp"

namespace axrec {

// ---- schedule ---------------------------------------------------------------

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("schedule needs T >= 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<std::size_t>(T));
    s.alphas_bar.resize(static_cast<std::size_t>(T));
    double abar = 1.0;
    for (int t = 0; t < T; ++t) {
        double b = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
        s.betas[static_cast<std::size_t>(t)] = b;
        abar *= 1.0 - b;
        s.alphas_bar[static_cast<std::size_t>(t)] = abar;
    }
    return s;
}

void NoiseSchedule::validate() const {
    double prev = 1.0;
    for (int t = 1; t <= T; ++t) {
        if (!(beta(t) > 0.0 && beta(t) < 1.0)) throw Error("beta out of (0,1)");
        if (!(abar(t) < prev)) throw Error("alphas_bar not strictly decreasing");
        prev = abar(t);
    }
}

Image forward_noise(const Image& x0, int t, const NoiseSchedule& sched, const Image& eps) {
    if (t < 1 || t > sched.T) throw Error("timestep out of [1,T]");
    if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw Error("eps shape mismatch");
    double abar = sched.abar(t);
    return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
}

Image apply_prior(const Image& x_t, const Image& m_inr, double gamma) {
    if (x_t.rows() != m_inr.rows() || x_t.cols() != m_inr.cols())
        throw Error("prior shape mismatch");
    return gamma * m_inr + (1.0 - gamma) * x_t;
}

// ---- enum plumbing ------------------------------------------------------------

PredictionTarget prediction_target_from_string(const std::string& s) {
    if (s == "epsilon") return PredictionTarget::epsilon;
    if (s == "x0") return PredictionTarget::x0;
    throw ConfigError("unknown prediction target: " + s);
}
FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "addition") return FusionMode::addition;
    if (s == "cross_attention") return FusionMode::cross_attention;
    if (s == "none") return FusionMode::none;
    throw ConfigError("unknown fusion mode: " + s);
}
PriorMode prior_mode_from_string(const std::string& s) {
    if (s == "neighboring") return PriorMode::neighboring;
    if (s == "uniform_mean") return PriorMode::uniform_mean;
    if (s == "no_neighboring") return PriorMode::no_neighboring;
    if (s == "condition_concat") return PriorMode::condition_concat;
    if (s == "off") return PriorMode::off;
    throw ConfigError("unknown prior mode: " + s);
}
std::string to_string(PredictionTarget t) {
    return t == PredictionTarget::epsilon ? "epsilon" : "x0";
}
std::string to_string(FusionMode m) {
    switch (m) {
        case FusionMode::addition: return "addition";
        case FusionMode::cross_attention: return "cross_attention";
        case FusionMode::none: return "none";
    }
    return "?";
}
std::string to_string(PriorMode m) {
    switch (m) {
        case PriorMode::neighboring: return "neighboring";
        case PriorMode::uniform_mean: return "uniform_mean";
        case PriorMode::no_neighboring: return "no_neighboring";
        case PriorMode::condition_concat: return "condition_concat";
        case PriorMode::off: return "off";
    }
    return "?";
}

void GuidanceConfig::validate() {
    if (w < 0.0) throw ConfigError("guidance strength w must be >= 0");
    if (p_uncond < 0.0 || p_uncond > 1.0) throw ConfigError("p_uncond must be in [0,1]");
    if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in [0,1)");
    if (gamma > 0.99) gamma = 0.99;
    if (inference_steps < 1) throw ConfigError("inference_steps must be >= 1");
}

// ---- cross attention ----------------------------------------------------------

CrossAttention::CrossAttention(int channels, int cond_dim, int head_dim, Rng& rng)
    : cond_dim_(cond_dim), head_dim_(head_dim) {
    int half = cond_dim / 2;
    tok1_ = nn::Linear(half, head_dim, rng);
    tok2_ = nn::Linear(cond_dim - half, head_dim, rng);
    wq_ = nn::Linear(channels, head_dim, rng);
    wk_ = nn::Linear(head_dim, head_dim, rng);
    wv_ = nn::Linear(head_dim, head_dim, rng);
    wo_ = nn::Linear(head_dim, channels, rng, 0.05);
}

nn::FMap CrossAttention::forward(const nn::FMap& x, const Vec& cond) {
    cond_cache_ = cond;
    int half = cond_dim_ / 2;
    tok_.resize(2, head_dim_);
    tok_.row(0) = tok1_.forward(cond.head(half).transpose());
    tok_.row(1) = tok2_.forward(cond.tail(cond_dim_ - half).transpose());
    k_ = wk_.forward(tok_);                      // 2 x d
    v_ = wv_.forward(tok_);                      // 2 x d
    q_ = wq_.forward(x.data.transpose());        // npix x d
    Mat s = q_ * k_.transpose() / std::sqrt(static_cast<double>(head_dim_));
    attn_.resize(s.rows(), 2);
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        double m = std::max(s(r, 0), s(r, 1));
        double e0 = std::exp(s(r, 0) - m), e1 = std::exp(s(r, 1) - m);
        attn_(r, 0) = e0 / (e0 + e1);
        attn_(r, 1) = e1 / (e0 + e1);
    }
    Mat out = wo_.forward(attn_ * v_);           // npix x channels
    return nn::FMap{out.transpose(), x.h, x.w};
}

nn::FMap CrossAttention::backward(const nn::FMap& dy, Vec& dcond) {
    Mat dout = dy.data.transpose();              // npix x channels
    Mat dov = wo_.backward(dout);                // npix x d
    Mat dattn = dov * v_.transpose();            // npix x 2
    Mat dv = attn_.transpose() * dov;            // 2 x d
    // softmax backward per row
    Mat ds(attn_.rows(), 2);
    for (Eigen::Index r = 0; r < attn_.rows(); ++r) {
        double dot = dattn.row(r).dot(attn_.row(r));
        ds(r, 0) = attn_(r, 0) * (dattn(r, 0) - dot);
        ds(r, 1) = attn_(r, 1) * (dattn(r, 1) - dot);
    }
    ds /= std::sqrt(static_cast<double>(head_dim_));
    Mat dq = ds * k_;                            // npix x d
    Mat dk = ds.transpose() * q_;                // 2 x d
    Mat dx = wq_.backward(dq);                   // npix x channels
    Mat dtok = wk_.backward(dk) + wv_.backward(dv);  // 2 x d_in? both return 2 x head_dim
    int half = cond_dim_ / 2;
    dcond.head(half) += tok1_.backward(dtok.row(0)).row(0).transpose();
    dcond.tail(cond_dim_ - half) += tok2_.backward(dtok.row(1)).row(0).transpose();
    return nn::FMap{dx.transpose(), dy.h, dy.w};
}

void CrossAttention::collect(const std::string& prefix, nn::ParamRefs& out) {
    tok1_.collect(prefix + ".tok1", out);
    tok2_.collect(prefix + ".tok2", out);
    wq_.collect(prefix + ".wq", out);
    wk_.collect(prefix + ".wk", out);
    wv_.collect(prefix + ".wv", out);
    wo_.collect(prefix + ".wo", out);
}

// ---- ResBlock -----------------------------------------------------------------

ResBlock::ResBlock(int cin, int cout, int time_dim, int cond_dim, FusionMode fusion, Rng& rng)
    : fusion_(fusion) {
    n1_ = nn::ChannelNorm(cin);
    c1_ = nn::Conv2d(cin, cout, 3, 1, 1, rng);
    n2_ = nn::ChannelNorm(cout);
    c2_ = nn::Conv2d(cout, cout, 3, 1, 1, rng);
    if (cin != cout) {
        skip_ = nn::Conv2d(cin, cout, 1, 1, 0, rng);
        has_skip_ = true;
    }
    t_proj_ = nn::Linear(time_dim, cout, rng, 0.05);
    if (fusion == FusionMode::addition) c_proj_ = nn::Linear(cond_dim, cout, rng, 0.05);
    if (fusion == FusionMode::cross_attention) xattn_ = CrossAttention(cout, cond_dim, 32, rng);
}

nn::FMap ResBlock::forward(const nn::FMap& x, const Vec& temb, const Condition& cond) {
    x_cache_ = x;
    nn::FMap h = c1_.forward(a1_.forward(n1_.forward(x)));
    h = n2_.forward(h);
    // inject time/condition between the norm and the nonlinearity: a bias added
    // after the last norm of the block would be erased by the next ChannelNorm
    Vec bias = t_proj_.forward(temb.transpose()).row(0).transpose();
    if (fusion_ == FusionMode::addition) {
        bias += c_proj_.forward(cond.vector.transpose()).row(0).transpose();
    }
    h.data.colwise() += bias;
    h = c2_.forward(a2_.forward(h));
    nn::FMap y{has_skip_ ? h.data + skip_.forward(x).data : h.data + x.data, h.h, h.w};
    if (fusion_ == FusionMode::cross_attention) {
        y.data += xattn_.forward(y, cond.vector).data;
    }
    return y;
}

nn::FMap ResBlock::backward(const nn::FMap& dy_in, Vec& dtemb, Vec& dcond) {
    nn::FMap dy = dy_in;
    if (fusion_ == FusionMode::cross_attention) {
        nn::FMap datt = xattn_.backward(dy, dcond);
        dy.data += datt.data;
    }
    nn::FMap dx = has_skip_ ? skip_.backward(dy) : dy;
    nn::FMap dh = c2_.backward(dy);
    dh = a2_.backward(dh);
    Vec dbias = dh.data.rowwise().sum();
    dtemb += t_proj_.backward(dbias.transpose()).row(0).transpose();
    if (fusion_ == FusionMode::addition)
        dcond += c_proj_.backward(dbias.transpose()).row(0).transpose();
    dh = n2_.backward(dh);
    dh = c1_.backward(dh);
    dh = n1_.backward(a1_.backward(dh));
    dx.data += dh.data;
    return dx;
}

void ResBlock::collect(const std::string& prefix, nn::ParamRefs& out) {
    n1_.collect(prefix + ".n1", out);
    c1_.collect(prefix + ".c1", out);
    n2_.collect(prefix + ".n2", out);
    c2_.collect(prefix + ".c2", out);
    if (has_skip_) skip_.collect(prefix + ".skip", out);
    t_proj_.collect(prefix + ".t_proj", out);
    if (fusion_ == FusionMode::addition) c_proj_.collect(prefix + ".c_proj", out);
    if (fusion_ == FusionMode::cross_attention) xattn_.collect(prefix + ".xattn", out);
}

// ---- Denoiser -------------------------------------------------------------------

namespace {
constexpr int kTimeBaseDim = 32;
}

Denoiser::Denoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    Rng rng(seed ^ 0xDE401534211EF00DULL);
    int cb = cfg.base_channels;
    enc0_channels_ = cb;
    in_conv_ = nn::Conv2d(1, cb, 3, 1, 1, rng);
    enc0_ = ResBlock(cb, cb, cfg.time_embed_dim, cfg.cond_dim, cfg.fusion, rng);
    enc1_ = ResBlock(cb, 2 * cb, cfg.time_embed_dim, cfg.cond_dim, cfg.fusion, rng);
    mid_ = ResBlock(2 * cb, 2 * cb, cfg.time_embed_dim, cfg.cond_dim, cfg.fusion, rng);
    dec0_ = ResBlock(3 * cb, cb, cfg.time_embed_dim, cfg.cond_dim, cfg.fusion, rng);
    out_norm_ = nn::ChannelNorm(cb);
    out_conv_ = nn::Conv2d(cb, 1, 3, 1, 1, rng, 0.01);
    t_fc1_ = nn::Linear(kTimeBaseDim, cfg.time_embed_dim, rng);
    t_fc2_ = nn::Linear(cfg.time_embed_dim, cfg.time_embed_dim, rng);
}

Image Denoiser::forward(const Image& x, int t, const Condition& cond) {
    if (x.rows() % 2 != 0 || x.cols() % 2 != 0) throw Error("denoiser needs even H and W");
    cond_cache_ = cond;
    Vec tb = nn::timestep_embedding(t, kTimeBaseDim);
    Vec temb = t_fc2_.forward(t_act_.forward(t_fc1_.forward(tb.transpose()))).row(0).transpose();

    nn::FMap f = in_conv_.forward(nn::FMap::from_image(x));
    nn::FMap e0 = enc0_.forward(f, temb, cond);
    nn::FMap e1 = enc1_.forward(down_.forward(e0), temb, cond);
    nn::FMap m = mid_.forward(e1, temb, cond);
    nn::FMap u = up_.forward(m);
    nn::FMap cat{Mat(u.channels() + e0.channels(), u.data.cols()), u.h, u.w};
    cat.data.topRows(u.channels()) = u.data;
    cat.data.bottomRows(e0.channels()) = e0.data;
    nn::FMap o = dec0_.forward(cat, temb, cond);
    nn::FMap out = out_conv_.forward(out_act_.forward(out_norm_.forward(o)));
    return out.to_image(0);
}

Vec Denoiser::backward(const Image& dout) {
    Vec dtemb = Vec::Zero(cfg_.time_embed_dim);
    Vec dcond = Vec::Zero(cfg_.cond_dim);
    nn::FMap df = out_conv_.backward(nn::FMap::from_image(dout));
    df = out_norm_.backward(out_act_.backward(df));
    nn::FMap dcat = dec0_.backward(df, dtemb, dcond);
    int cb2 = 2 * enc0_channels_;
    nn::FMap du{dcat.data.topRows(cb2), dcat.h, dcat.w};
    nn::FMap de0_skip{dcat.data.bottomRows(enc0_channels_), dcat.h, dcat.w};
    nn::FMap dm = up_.backward(du);
    nn::FMap de1 = mid_.backward(dm, dtemb, dcond);
    nn::FMap dd1 = enc1_.backward(de1, dtemb, dcond);
    nn::FMap de0 = down_.backward(dd1);
    de0.data += de0_skip.data;
    nn::FMap dfin = enc0_.backward(de0, dtemb, dcond);
    in_conv_.backward(dfin);
    t_fc1_.backward(t_act_.backward(t_fc2_.backward(dtemb.transpose())));
    return dcond;
}

void Denoiser::collect(nn::ParamRefs& out) {
    in_conv_.collect("den.in_conv", out);
    enc0_.collect("den.enc0", out);
    enc1_.collect("den.enc1", out);
    mid_.collect("den.mid", out);
    dec0_.collect("den.dec0", out);
    out_norm_.collect("den.out_norm", out);
    out_conv_.collect("den.out_conv", out);
    t_fc1_.collect("den.t_fc1", out);
    t_fc2_.collect("den.t_fc2", out);
}

// ---- model bundle ----------------------------------------------------------------

DiffusionModel::DiffusionModel(const DenoiserConfig& dcfg, const CondEncoderConfig& ccfg,
                               int pos_in_dim, const NoiseSchedule& sched,
                               const GuidanceConfig& gcfg, std::uint64_t seed)
    : dcfg_(dcfg), ccfg_(ccfg), pos_in_dim_(pos_in_dim), sched_(sched), gcfg_(gcfg) {
    gcfg_.validate();
    ccfg_.encode_prior = gcfg_.prior_mode == PriorMode::condition_concat;
    encoders_ = ConditionEncoders(ccfg_, pos_in_dim, seed);
    dcfg_.cond_dim = encoders_.cond_dim();
    dcfg_.fusion = gcfg_.fusion;
    denoiser_ = Denoiser(dcfg_, seed + 1);
}

nn::ParamRefs DiffusionModel::params() {
    nn::ParamRefs refs;
    denoiser_.collect(refs);
    auto enc = encoders_.params();
    refs.insert(refs.end(), enc.begin(), enc.end());
    return refs;
}

std::uint64_t DiffusionModel::params_hash() { return nn::params_hash(params()); }

// ---- training -----------------------------------------------------------------

double train_step(DiffusionModel& model, const Encoding& pos_encoding,
                  const std::vector<TrainSample>& batch, Rng& drop_rng) {
    if (batch.empty()) throw Error("empty training batch");
    const auto& gcfg = model.guidance();
    const auto& sched = model.schedule();
    double gamma = gcfg.effective_gamma();
    double total = 0.0;
    for (const auto& s : batch) {
        Vec pos = encode_one(pos_encoding, 0.0, 0.0, s.z);
        const Image* prior_for_cond =
            gcfg.prior_mode == PriorMode::condition_concat ? &s.m_inr : nullptr;
        Condition c = model.encoders().build(s.x_proj, pos, prior_for_cond);
        c = drop_condition(c, model.encoders().null_condition(), gcfg.p_uncond, drop_rng);

        Image x0m = to_model_domain(s.x0);
        Image xt = forward_noise(x0m, s.t, sched, s.eps);
        Image xt_in = gamma > 0.0 ? apply_prior(xt, to_model_domain(s.m_inr), gamma) : xt;

        Image pred = model.denoiser().forward(xt_in, s.t, c);
        const Image& target = gcfg.prediction_target == PredictionTarget::epsilon ? s.eps : x0m;
        Image diff = pred - target;
        double loss = diff.array().square().mean();
        if (!std::isfinite(loss))
            throw Error("diffusion train step produced non-finite loss (t=" +
                        std::to_string(s.t) + ")");
        total += loss;

        Image dout = (2.0 / static_cast<double>(diff.size())) * diff;
        Vec dcond = model.denoiser().backward(dout);
        model.encoders().backward(c, dcond);
    }
    return total / static_cast<double>(batch.size());
}

Image prior_for(DiffusionModel& model, InrField* f_inr, double z, const ProjectionStack& stack,
                int height, int width) {
    PriorMode mode = model.guidance().prior_mode;
    if (mode == PriorMode::off) return Image();
    if (!f_inr) throw Error("prior mode requires a trained INR field");
    PriorWeighting weighting = PriorWeighting::neighboring;
    if (mode == PriorMode::uniform_mean) weighting = PriorWeighting::uniform_mean;
    if (mode == PriorMode::no_neighboring) weighting = PriorWeighting::no_neighboring;
    return infer_prior(*f_inr, z, stack.step_length, stack.source_depth, height, width,
                       weighting, model.guidance().centered_offsets);
}

void train_diffusion(DiffusionModel& model, const Encoding& pos_encoding, InrField* f_inr,
                     const Volume& truth, const ProjectionStack& stack,
                     const DiffusionTrainConfig& cfg) {
    const auto& gcfg = model.guidance();
    const int depth = truth.depth(), h = truth.height(), w = truth.width();
    std::uint64_t inr_hash_before = f_inr ? f_inr->params_hash() : 0;

    // static per-slice data; priors computed once against the frozen INR
    std::vector<TrainSample> dataset(static_cast<std::size_t>(depth));
    for (int k = 0; k < depth; ++k) {
        auto& s = dataset[static_cast<std::size_t>(k)];
        s.x0 = truth.slice(k);
        s.z = slice_center_z(k, depth);
        s.x_proj = stack.projections[static_cast<std::size_t>(stack.subvolume_of_slice(k))];
        if (gcfg.uses_prior_image()) s.m_inr = prior_for(model, f_inr, s.z, stack, h, w);
    }

    Rng rng(cfg.seed ^ 0xD1FF0515D1FF0515ULL);
    nn::Adam opt(cfg.learning_rate);
    auto refs = model.params();
    std::vector<int> order(static_cast<std::size_t>(depth));
    std::iota(order.begin(), order.end(), 0);
    int batch = std::max(1, std::min(cfg.batch_slices, depth));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int i = depth - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
        double epoch_loss = 0.0;
        int steps = 0;
        for (int start = 0; start < depth; start += batch) {
            std::vector<TrainSample> b;
            for (int j = start; j < std::min(depth, start + batch); ++j) {
                TrainSample s = dataset[static_cast<std::size_t>(order[j])];
                s.t = rng.uniform_int(1, model.schedule().T);
                s.eps.resize(h, w);
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) s.eps(y, x) = rng.gaussian();
                b.push_back(std::move(s));
            }
            nn::zero_grads(refs);
            double loss = train_step(model, pos_encoding, b, rng);
            opt.step(refs, 1.0 / static_cast<double>(b.size()));
            epoch_loss += loss;
            ++steps;
        }
        model.loss_history.push_back(epoch_loss / steps);
        if (cfg.on_epoch) cfg.on_epoch(epoch, epoch_loss / steps);
    }
    if (f_inr && f_inr->params_hash() != inr_hash_before)
        throw Error("INR parameters changed during diffusion training");
}

// ---- sampling -----------------------------------------------------------------

std::vector<int> inference_timesteps(int T, int steps) {
    steps = std::min(steps, T);
    std::vector<int> ts;
    for (int j = 0; j < steps; ++j) {
        int t = static_cast<int>(std::lround(
            static_cast<double>(T) - static_cast<double>(j) * (T - 1) / std::max(1, steps - 1)));
        if (ts.empty() || t < ts.back()) ts.push_back(t);
    }
    if (ts.back() != 1) ts.push_back(1);
    return ts;  // descending, ends at 1
}

namespace {

Image gaussian_image(int h, int w, Rng& rng) {
    Image img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img(y, x) = rng.gaussian();
    return img;
}

}  // namespace

Image sample_slice(DiffusionModel& model, const Encoding& pos_encoding, const Image& x_proj,
                   double z, const Image& m_inr, Rng& rng) {
    const auto& gcfg = model.guidance();
    const auto& sched = model.schedule();
    const int h = static_cast<int>(x_proj.rows()), w = static_cast<int>(x_proj.cols());
    double gamma = gcfg.effective_gamma();

    Vec pos = encode_one(pos_encoding, 0.0, 0.0, z);
    const Image* prior_for_cond =
        gcfg.prior_mode == PriorMode::condition_concat ? &m_inr : nullptr;
    Condition c = model.encoders().build(x_proj, pos, prior_for_cond);
    Condition null_c = model.encoders().null_condition();

    Image m_model;
    if (gamma > 0.0) m_model = to_model_domain(m_inr);

    auto ts = inference_timesteps(sched.T, gcfg.inference_steps);
    Image x = gaussian_image(h, w, rng);
    for (std::size_t j = 0; j < ts.size(); ++j) {
        int t = ts[j];
        int t_prev = j + 1 < ts.size() ? ts[j + 1] : 0;
        Image x_in = gamma > 0.0 ? apply_prior(x, m_model, gamma) : x;

        Image pred = model.denoiser().forward(x_in, t, c);
        if (gcfg.w != 0.0) {
            Image pred_u = model.denoiser().forward(x_in, t, null_c);
            pred = (1.0 + gcfg.w) * pred - gcfg.w * pred_u;
        }
        // route through the implied x0 and clamp it to the data range: at high t
        // small epsilon biases otherwise compound and the chain diverges
        double abar = sched.abar(t);
        Image x0_hat = gcfg.prediction_target == PredictionTarget::x0
                           ? pred
                           : Image((x - std::sqrt(1.0 - abar) * pred) / std::sqrt(abar));
        x0_hat = x0_hat.cwiseMax(-1.0).cwiseMin(1.0);
        Image eps_t = (x - std::sqrt(abar) * x0_hat) / std::sqrt(1.0 - abar);
        if (gcfg.literal_alg2) {
            x = x - eps_t;
        } else {
            double a = sched.abar(t) / sched.abar(t_prev);  // effective 1 - beta
            x = (x - ((1.0 - a) / std::sqrt(1.0 - sched.abar(t))) * eps_t) / std::sqrt(a);
            if (t_prev > 0) x += std::sqrt(1.0 - a) * gaussian_image(h, w, rng);
        }
        if (!x.allFinite()) throw Error("sampler state became non-finite at t=" + std::to_string(t));
    }
    return from_model_domain(x);
}

Volume reconstruct_volume(DiffusionModel& model, const Encoding& pos_encoding, InrField* f_inr,
                          const ProjectionStack& stack, int depth_out, std::uint64_t seed) {
    const int h = stack.height(), w = stack.width();
    Volume out(depth_out, h, w, 0.0f, "reconstruction");
    for (int k = 0; k < depth_out; ++k) {
        double z = slice_center_z(k, depth_out);
        const Image& proj = stack.projections[static_cast<std::size_t>(stack.subvolume_of_slice(k))];
        Image prior;
        if (model.guidance().uses_prior_image()) prior = prior_for(model, f_inr, z, stack, h, w);
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(k));
        out.set_slice(k, sample_slice(model, pos_encoding, proj, z, prior, rng));
    }
    return out;
}

// ---- checkpoint ----------------------------------------------------------------

void DiffusionModel::save(const std::string& path) const {
    nlohmann::json header{
        {"kind", "diffusion"},
        {"denoiser", {{"base_channels", dcfg_.base_channels},
                      {"time_embed_dim", dcfg_.time_embed_dim},
                      {"cond_dim", dcfg_.cond_dim}}},
        {"cond", {{"img_base_channels", ccfg_.img_base_channels},
                  {"img_out_dim", ccfg_.img_out_dim},
                  {"pos_hidden", ccfg_.pos_hidden},
                  {"pos_out_dim", ccfg_.pos_out_dim}}},
        {"pos_in_dim", pos_in_dim_},
        {"schedule", {{"T", sched_.T}}},
        {"guidance", {{"w", gcfg_.w},
                      {"gamma", gcfg_.gamma},
                      {"p_uncond", gcfg_.p_uncond},
                      {"prediction_target", to_string(gcfg_.prediction_target)},
                      {"prior_mode", to_string(gcfg_.prior_mode)},
                      {"fusion", to_string(gcfg_.fusion)},
                      {"centered_offsets", gcfg_.centered_offsets},
                      {"literal_alg2", gcfg_.literal_alg2},
                      {"inference_steps", gcfg_.inference_steps}}},
        {"inr_checkpoint_hash", inr_checkpoint_hash},
        {"loss_history", loss_history}};
    std::vector<double> blob(sched_.betas.begin(), sched_.betas.end());
    nn::ParamRefs refs;
    auto& self = const_cast<DiffusionModel&>(*this);
    refs = self.params();
    std::vector<double> p;
    nn::serialize_params(refs, p);
    blob.insert(blob.end(), p.begin(), p.end());
    save_blob(path, header, blob);
}

DiffusionModel DiffusionModel::load(const std::string& path) {
    auto [header, blob] = load_blob(path);
    if (header.value("kind", "") != "diffusion") throw IoError("not a diffusion checkpoint: " + path);
    DenoiserConfig dcfg;
    dcfg.base_channels = header["denoiser"]["base_channels"].get<int>();
    dcfg.time_embed_dim = header["denoiser"]["time_embed_dim"].get<int>();
    CondEncoderConfig ccfg;
    ccfg.img_base_channels = header["cond"]["img_base_channels"].get<int>();
    ccfg.img_out_dim = header["cond"]["img_out_dim"].get<int>();
    ccfg.pos_hidden = header["cond"]["pos_hidden"].get<int>();
    ccfg.pos_out_dim = header["cond"]["pos_out_dim"].get<int>();
    GuidanceConfig gcfg;
    const auto& gj = header["guidance"];
    gcfg.w = gj["w"].get<double>();
    gcfg.gamma = gj["gamma"].get<double>();
    gcfg.p_uncond = gj["p_uncond"].get<double>();
    gcfg.prediction_target = prediction_target_from_string(gj["prediction_target"].get<std::string>());
    gcfg.prior_mode = prior_mode_from_string(gj["prior_mode"].get<std::string>());
    gcfg.fusion = fusion_mode_from_string(gj["fusion"].get<std::string>());
    gcfg.centered_offsets = gj["centered_offsets"].get<bool>();
    gcfg.literal_alg2 = gj["literal_alg2"].get<bool>();
    gcfg.inference_steps = gj["inference_steps"].get<int>();

    int T = header["schedule"]["T"].get<int>();
    NoiseSchedule sched;
    sched.T = T;
    sched.betas.assign(blob.begin(), blob.begin() + T);
    sched.alphas_bar.resize(static_cast<std::size_t>(T));
    double abar = 1.0;
    for (int t = 0; t < T; ++t) {
        abar *= 1.0 - sched.betas[static_cast<std::size_t>(t)];
        sched.alphas_bar[static_cast<std::size_t>(t)] = abar;
    }

    DiffusionModel m(dcfg, ccfg, header["pos_in_dim"].get<int>(), sched, gcfg, 0);
    m.inr_checkpoint_hash = header.value("inr_checkpoint_hash", "");
    m.loss_history = header.value("loss_history", std::vector<double>{});
    auto refs = m.params();
    std::vector<double> p(blob.begin() + T, blob.end());
    nn::deserialize_params(refs, p);
    return m;
}

}  // namespace axrec
