#include "axrec/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace axrec {

namespace {

constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);

Mat gaussian_window(int size, double sigma) {
    Mat w(size, size);
    int r = size / 2;
    double sum = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double d2 = (y - r) * (y - r) + (x - r) * (x - r);
            w(y, x) = std::exp(-0.5 * d2 / (sigma * sigma));
            sum += w(y, x);
        }
    return w / sum;
}

void check_shapes(const Image& x, const Image& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) throw Error("image shape mismatch");
    if (x.rows() < 1 || x.cols() < 1) throw Error("empty image");
}

}  // namespace

double ssim(const Image& x01, const Image& y01) {
    check_shapes(x01, y01);
    Image x = 255.0 * x01, y = 255.0 * y01;
    int mindim = static_cast<int>(std::min(x.rows(), x.cols()));
    int win = std::min(11, mindim % 2 == 0 ? mindim - 1 : mindim);
    Mat w = gaussian_window(win, 1.5);

    double acc = 0.0;
    int count = 0;
    for (Eigen::Index oy = 0; oy + win <= x.rows(); ++oy)
        for (Eigen::Index ox = 0; ox + win <= x.cols(); ++ox) {
            auto bx = x.block(oy, ox, win, win).array();
            auto by = y.block(oy, ox, win, win).array();
            auto wa = w.array();
            double mx = (wa * bx).sum();
            double my = (wa * by).sum();
            double vx = (wa * bx * bx).sum() - mx * mx;
            double vy = (wa * by * by).sum() - my * my;
            double cov = (wa * bx * by).sum() - mx * my;
            double num = (2.0 * mx * my + kC1) * (2.0 * cov + kC2);
            double den = (mx * mx + my * my + kC1) * (vx + vy + kC2);
            acc += num / den;
            ++count;
        }
    return acc / count;
}

double ssim_global(const Image& x01, const Image& y01) {
    check_shapes(x01, y01);
    Image x = 255.0 * x01, y = 255.0 * y01;
    double n = static_cast<double>(x.size());
    double mx = x.mean(), my = y.mean();
    double vx = (x.array() - mx).square().sum() / n;
    double vy = (y.array() - my).square().sum() / n;
    double cov = ((x.array() - mx) * (y.array() - my)).sum() / n;
    double sx = std::sqrt(vx), sy = std::sqrt(vy);
    double c3 = kC2 / 2.0;
    double l = (2.0 * mx * my + kC1) / (mx * mx + my * my + kC1);
    double c = (2.0 * sx * sy + kC2) / (vx + vy + kC2);
    double s = (cov + c3) / (sx * sy + c3);
    return l * c * s;
}

double psnr(const Image& x, const Image& y) {
    check_shapes(x, y);
    double mse = (255.0 * (x - y)).array().square().mean();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

OtsuResult otsu_threshold(const Image& img) {
    if (img.size() < 1) throw Error("empty image");
    std::array<std::int64_t, 256> hist{};
    for (Eigen::Index i = 0; i < img.size(); ++i) {
        int bin = static_cast<int>(std::lround(img.data()[i] * 255.0));
        bin = std::clamp(bin, 0, 255);
        ++hist[static_cast<std::size_t>(bin)];
    }
    auto total = static_cast<double>(img.size());
    double sum_all = 0.0;
    for (int b = 0; b < 256; ++b) sum_all += b * static_cast<double>(hist[b]);

    int lo = 0, hi = 255;
    while (lo < 255 && hist[lo] == 0) ++lo;
    while (hi > 0 && hist[hi] == 0) --hi;
    if (lo == hi) return {static_cast<double>(lo), true};

    double best_var = -1.0;
    int best_t = 0;
    double w0 = 0.0, sum0 = 0.0;
    for (int t = 0; t < 256; ++t) {
        w0 += static_cast<double>(hist[t]);
        sum0 += t * static_cast<double>(hist[t]);
        double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        double mu0 = sum0 / w0;
        double mu1 = (sum_all - sum0) / w1;
        double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best_var) {
            best_var = between;
            best_t = t;
        }
    }
    return {static_cast<double>(best_t), false};
}

std::vector<bool> binarize(const Image& img, double threshold255) {
    std::vector<bool> mask(static_cast<std::size_t>(img.size()));
    for (Eigen::Index i = 0; i < img.size(); ++i) mask[static_cast<std::size_t>(i)] = img.data()[i] * 255.0 > threshold255;
    return mask;
}

double dice(const std::vector<bool>& x_mask, const std::vector<bool>& y_mask, double c) {
    if (x_mask.size() != y_mask.size()) throw Error("mask shape mismatch");
    std::size_t inter = 0, nx = 0, ny = 0;
    for (std::size_t i = 0; i < x_mask.size(); ++i) {
        nx += x_mask[i];
        ny += y_mask[i];
        inter += x_mask[i] && y_mask[i];
    }
    return (2.0 * static_cast<double>(inter) + c) / (static_cast<double>(nx + ny) + c);
}

MetricReport evaluate(const Volume& recon, const Volume& truth) {
    if (recon.depth() != truth.depth() || recon.height() != truth.height() ||
        recon.width() != truth.width())
        throw Error("volume dim mismatch in evaluate");

    MetricReport rep;
    std::vector<bool> vol_mask_r, vol_mask_t;
    double sum_ssim = 0.0, sum_psnr = 0.0, sum_dice = 0.0;
    int finite_psnr = 0;
    for (int z = 0; z < recon.depth(); ++z) {
        Image r = recon.slice(z), t = truth.slice(z);
        SliceMetrics m;
        m.ssim = ssim(r, t);
        m.psnr = psnr(r, t);
        auto otsu_r = otsu_threshold(r);
        auto otsu_t = otsu_threshold(t);
        auto mask_r = binarize(r, otsu_r.threshold);
        auto mask_t = binarize(t, otsu_t.threshold);
        m.dice = dice(mask_r, mask_t);
        rep.per_slice.push_back(m);
        sum_ssim += m.ssim;
        sum_dice += m.dice;
        if (std::isfinite(m.psnr)) {
            sum_psnr += m.psnr;
            ++finite_psnr;
        }
        vol_mask_r.insert(vol_mask_r.end(), mask_r.begin(), mask_r.end());
        vol_mask_t.insert(vol_mask_t.end(), mask_t.begin(), mask_t.end());
    }
    auto slices = static_cast<double>(rep.per_slice.size());
    rep.mean_ssim = sum_ssim / slices;
    rep.mean_dice = sum_dice / slices;
    rep.infinite_psnr_count = static_cast<int>(slices) - finite_psnr;
    rep.mean_psnr = finite_psnr > 0 ? sum_psnr / finite_psnr
                                    : std::numeric_limits<double>::infinity();
    rep.volume_dice = dice(vol_mask_r, vol_mask_t);
    return rep;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["mean_ssim"] = mean_ssim;
    j["mean_psnr"] = std::isfinite(mean_psnr) ? nlohmann::json(mean_psnr) : nlohmann::json("inf");
    j["infinite_psnr_count"] = infinite_psnr_count;
    j["mean_dice"] = mean_dice;
    j["volume_dice"] = volume_dice;
    auto& ps = j["per_slice"] = nlohmann::json::array();
    for (const auto& m : per_slice)
        ps.push_back({{"ssim", m.ssim},
                      {"psnr", std::isfinite(m.psnr) ? nlohmann::json(m.psnr) : nlohmann::json("inf")},
                      {"dice", m.dice}});
    return j.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    MetricReport rep;
    auto num = [](const nlohmann::json& v) {
        return v.is_string() ? std::numeric_limits<double>::infinity() : v.get<double>();
    };
    rep.mean_ssim = j.at("mean_ssim").get<double>();
    rep.mean_psnr = num(j.at("mean_psnr"));
    rep.infinite_psnr_count = j.at("infinite_psnr_count").get<int>();
    rep.mean_dice = j.at("mean_dice").get<double>();
    rep.volume_dice = j.at("volume_dice").get<double>();
    for (const auto& m : j.at("per_slice"))
        rep.per_slice.push_back({m.at("ssim").get<double>(), num(m.at("psnr")), m.at("dice").get<double>()});
    return rep;
}

}  // namespace axrec
