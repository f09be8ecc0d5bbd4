#include "axrec/inr.hpp"

#include <algorithm>
#include <numeric>

#include "axrec/checkpoint.hpp"

namespace axrec {

double neighbor_weight(int k, int n, bool centered_offsets) {
    if (n < 1 || k < 1 || k > n) throw Error("neighbor_weight: k out of [1,n]");
    double u = centered_offsets ? (k - 0.5) / n : static_cast<double>(k) / n;
    double d = u - 0.5;
    return std::exp(-0.5 * d * d) / std::sqrt(2.0 * 3.1415926535897932384626433832795);
}

PriorWeighting prior_weighting_from_string(const std::string& s) {
    if (s == "neighboring") return PriorWeighting::neighboring;
    if (s == "uniform_mean") return PriorWeighting::uniform_mean;
    if (s == "no_neighboring") return PriorWeighting::no_neighboring;
    throw ConfigError("unknown prior weighting: " + s);
}

std::string to_string(PriorWeighting w) {
    switch (w) {
        case PriorWeighting::neighboring: return "neighboring";
        case PriorWeighting::uniform_mean: return "uniform_mean";
        case PriorWeighting::no_neighboring: return "no_neighboring";
    }
    return "?";
}

// ---- Mlp --------------------------------------------------------------------

Mlp::Mlp(const std::vector<int>& dims, Rng& rng, bool sigmoid_output)
    : dims_(dims), sigmoid_out_(sigmoid_output) {
    if (dims.size() < 2) throw ConfigError("Mlp needs at least input and output dims");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        layers_.emplace_back(dims[i], dims[i + 1], rng);
    acts_.resize(layers_.size() - 1);
}

Mat Mlp::forward(const Mat& x) {
    Mat h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].forward(h);
        if (i + 1 < layers_.size()) h = acts_[i].forward(h);
    }
    if (sigmoid_out_) h = out_act_.forward(h);
    return h;
}

Mat Mlp::backward(const Mat& dy) {
    Mat d = dy;
    if (sigmoid_out_) d = out_act_.backward(d);
    for (std::size_t i = layers_.size(); i-- > 0;) {
        d = layers_[i].backward(d);
        if (i > 0) d = acts_[i - 1].backward(d);
    }
    return d;
}

void Mlp::collect(const std::string& prefix, nn::ParamRefs& out) {
    for (std::size_t i = 0; i < layers_.size(); ++i)
        layers_[i].collect(prefix + ".fc" + std::to_string(i), out);
}

// ---- InrField ---------------------------------------------------------------

InrField::InrField(Encoding enc, const std::vector<int>& hidden, std::uint64_t seed)
    : enc_(std::move(enc)) {
    std::vector<int> dims{encoding_out_dim(enc_)};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    Rng rng(seed ^ 0x1A2B3C4D5E6F7788ULL);
    mlp_ = Mlp(dims, rng, /*sigmoid_output=*/true);
}

Vec InrField::evaluate(const Mat& coords) {
    return mlp_.forward(encode(enc_, coords)).col(0);
}

void InrField::backward(const Vec& dvalues) {
    mlp_.backward(dvalues);
}

Image InrField::render_slice(double z, int height, int width) {
    Vec v = evaluate(slice_coordinate_grid(z, height, width));
    Image img(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) img(y, x) = v(static_cast<Eigen::Index>(y) * width + x);
    return img;
}

nn::ParamRefs InrField::params() {
    nn::ParamRefs refs;
    mlp_.collect("inr", refs);
    return refs;
}

std::uint64_t InrField::params_hash() {
    return nn::params_hash(params());
}

// ---- loss -------------------------------------------------------------------

double inr_loss_partial(InrField& f, const ProjectionStack& stack,
                        const std::vector<int>& projection_indices,
                        const std::vector<int>& pixel_indices, bool accumulate_grads) {
    const int n = stack.step_length;
    const int h = stack.height(), w = stack.width();
    const int depth = stack.source_depth;
    const auto np = static_cast<Eigen::Index>(pixel_indices.size());
    const auto ni = static_cast<Eigen::Index>(projection_indices.size());
    if (np == 0 || ni == 0) return 0.0;

    // rows grouped as [projection][slice-in-window][pixel]
    Mat coords(ni * n * np, 3);
    Eigen::Index r = 0;
    for (Eigen::Index a = 0; a < ni; ++a) {
        int i = projection_indices[a];
        for (int k = 0; k < n; ++k) {
            double z = slice_center_z(i * n + k, depth);
            for (Eigen::Index b = 0; b < np; ++b) {
                int p = pixel_indices[b];
                int y = p / w, x = p % w;
                coords(r, 0) = -1.0 + 2.0 * (x + 0.5) / w;
                coords(r, 1) = -1.0 + 2.0 * (y + 0.5) / h;
                coords(r, 2) = z;
                ++r;
            }
        }
    }

    Vec values = f.evaluate(coords);
    Vec dvalues = accumulate_grads ? Vec(Vec::Zero(values.size())) : Vec();
    double loss = 0.0;
    for (Eigen::Index a = 0; a < ni; ++a) {
        const Image& target = stack.projections[projection_indices[a]];
        for (Eigen::Index b = 0; b < np; ++b) {
            double pred = 0.0;
            for (int k = 0; k < n; ++k) pred += values((a * n + k) * np + b);
            pred /= n;
            int p = pixel_indices[b];
            double res = pred - target(p / w, p % w);
            loss += res * res / static_cast<double>(np);
            if (accumulate_grads) {
                double d = 2.0 * res / (static_cast<double>(np) * n);
                for (int k = 0; k < n; ++k) dvalues((a * n + k) * np + b) = d;
            }
        }
    }
    if (accumulate_grads) f.backward(dvalues);
    return loss;
}

double inr_loss(InrField& f, const ProjectionStack& stack) {
    if (stack.projections.empty()) throw Error("inr_loss: empty stack");
    std::vector<int> all_proj(stack.projections.size());
    std::iota(all_proj.begin(), all_proj.end(), 0);
    std::vector<int> all_pix(static_cast<std::size_t>(stack.height()) * stack.width());
    std::iota(all_pix.begin(), all_pix.end(), 0);
    // chunk projections to bound the working set
    double total = 0.0;
    for (int i : all_proj) total += inr_loss_partial(f, stack, {i}, all_pix, false);
    return total;
}

// ---- training ---------------------------------------------------------------

InrField train_inr(const ProjectionStack& stack, const Encoding& enc, const InrTrainConfig& cfg) {
    stack.validate();
    if (cfg.learning_rate <= 0.0 || cfg.epochs < 0) throw ConfigError("bad INR train config");
    InrField field(enc, {256, 256, 256}, cfg.seed);
    if (cfg.epochs == 0) return field;

    Rng rng(cfg.seed ^ 0xF00DF00DF00DF00DULL);
    nn::Adam opt(cfg.learning_rate);
    auto refs = field.params();

    const int num_proj = stack.count();
    const int num_pix = stack.height() * stack.width();
    const int batch = std::max(1, std::min(cfg.batch_projections, num_proj));
    const int pix = cfg.pixels_per_step > 0 ? std::min(cfg.pixels_per_step, num_pix) : num_pix;

    std::vector<int> order(num_proj);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with our own rng for cross-platform determinism
        for (int i = num_proj - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_int(0, i)]);
        double epoch_loss = 0.0;
        int steps = 0;
        for (int start = 0; start < num_proj; start += batch) {
            std::vector<int> proj_idx(order.begin() + start,
                                      order.begin() + std::min(num_proj, start + batch));
            std::vector<int> pixel_idx(pix);
            for (int& p : pixel_idx) p = rng.uniform_int(0, num_pix - 1);
            nn::zero_grads(refs);
            double loss = inr_loss_partial(field, stack, proj_idx, pixel_idx, true);
            if (!std::isfinite(loss))
                throw Error("INR training diverged at epoch " + std::to_string(epoch) +
                            " (non-finite loss)");
            opt.step(refs);
            epoch_loss += loss;
            ++steps;
        }
        field.loss_history.push_back(epoch_loss / steps);
        if (cfg.on_epoch) cfg.on_epoch(epoch, epoch_loss / steps);
    }
    field.trained = true;
    return field;
}

// ---- inference --------------------------------------------------------------

Image infer_prior(InrField& f, double z, int n, int source_depth, int height, int width,
                  PriorWeighting weighting, bool centered_offsets) {
    if (n < 1 || n > source_depth) throw Error("infer_prior: bad window size");
    if (weighting == PriorWeighting::no_neighboring || n == 1)
        return f.render_slice(z, height, width);

    int num_complete = source_depth / n;
    int sub = std::min(nearest_slice_index(z, source_depth) / n, num_complete - 1);

    std::vector<double> weights(n);
    for (int k = 1; k <= n; ++k)
        weights[k - 1] = (weighting == PriorWeighting::uniform_mean)
                             ? 1.0 / n
                             : neighbor_weight(k, n, centered_offsets);
    double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& g : weights) g /= sum;

    Image out = Image::Zero(height, width);
    for (int k = 0; k < n; ++k) {
        int slice = std::min(sub * n + k, source_depth - 1);
        out += weights[k] * f.render_slice(slice_center_z(slice, source_depth), height, width);
    }
    return out;
}

// ---- checkpoint -------------------------------------------------------------

void InrField::save(const std::string& path) const {
    nlohmann::json header{{"kind", "inr"},
                          {"mlp_dims", mlp_.dims()},
                          {"trained", trained},
                          {"loss_history", loss_history}};
    std::vector<double> blob;
    if (const auto* g = std::get_if<GaussianEncoding>(&enc_)) {
        header["encoding"] = {{"type", "gaussian"}, {"sigma", g->sigma()}, {"out_dim", g->out_dim()}};
        blob.insert(blob.end(), g->matrix().data(), g->matrix().data() + g->matrix().size());
    } else {
        const auto& s = std::get<SinCosEncoding>(enc_);
        header["encoding"] = {{"type", "sincos"},
                              {"num_frequencies", s.num_frequencies()},
                              {"include_input", s.include_input()}};
    }
    header["encoding_blob_len"] = blob.size();
    param_cache_.clear();
    const_cast<Mlp&>(mlp_).collect("inr", param_cache_);
    std::vector<double> params;
    nn::serialize_params(param_cache_, params);
    blob.insert(blob.end(), params.begin(), params.end());
    save_blob(path, header, blob);
}

InrField InrField::load(const std::string& path) {
    auto [header, blob] = load_blob(path);
    if (header.value("kind", "") != "inr") throw IoError("not an INR checkpoint: " + path);
    Encoding enc;
    std::size_t enc_len = header.at("encoding_blob_len").get<std::size_t>();
    const auto& ej = header.at("encoding");
    if (ej.at("type") == "gaussian") {
        int out_dim = ej.at("out_dim").get<int>();
        Mat B(out_dim / 2, 3);
        if (enc_len != static_cast<std::size_t>(B.size())) throw IoError("bad encoding blob in " + path);
        std::copy(blob.begin(), blob.begin() + B.size(), B.data());
        GaussianEncoding g;
        g.set_matrix(std::move(B), ej.at("sigma").get<double>());
        enc = std::move(g);
    } else {
        enc = SinCosEncoding(ej.at("num_frequencies").get<int>(), ej.value("include_input", false));
    }
    auto dims = header.at("mlp_dims").get<std::vector<int>>();
    InrField f;
    f.enc_ = std::move(enc);
    Rng rng(0);
    f.mlp_ = Mlp(dims, rng, true);
    f.trained = header.value("trained", false);
    f.loss_history = header.value("loss_history", std::vector<double>{});
    auto refs = f.params();
    std::vector<double> params(blob.begin() + static_cast<std::ptrdiff_t>(enc_len), blob.end());
    nn::deserialize_params(refs, params);
    return f;
}

}  // namespace axrec
