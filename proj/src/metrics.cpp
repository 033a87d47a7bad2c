#include "plvton/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>

#include <Eigen/Dense>

namespace plvton {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

// ---------------------------------------------------------------------------
// perceptual backbone

PerceptualBackboneImpl::PerceptualBackboneImpl(uint64_t seed) {
    auto gen = at::detail::createCPUGenerator(seed);
    int64_t in = 3;
    for (int i = 0; i < kPerceptualStages; ++i) {
        const int64_t out = channels_[static_cast<size_t>(i)];
        auto conv = nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1));
        {
            torch::NoGradGuard guard;
            const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
            conv->weight.copy_(at::normal(0.0, std, conv->weight.sizes(), gen));
            conv->bias.zero_();
        }
        stages_.push_back(register_module("stage" + std::to_string(i), conv));
        in = out;
    }
    for (auto& p : parameters()) p.set_requires_grad(false);
    eval();
}

std::vector<torch::Tensor> PerceptualBackboneImpl::features(const torch::Tensor& images) {
    require(images.dim() == 4 && images.size(1) == 3, "backbone expects N x 3 x H x W images");
    std::vector<torch::Tensor> out;
    out.reserve(stages_.size());
    auto x = (images - 0.5) * 2.0;
    for (size_t i = 0; i < stages_.size(); ++i) {
        if (i > 0 && x.size(2) >= 2 && x.size(3) >= 2) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
        x = torch::relu(stages_[i]->forward(x));
        out.push_back(x);
    }
    return out;
}

torch::Tensor perceptual_distance(PerceptualBackbone& backbone, const torch::Tensor& x,
                                  const std::vector<torch::Tensor>& target_features, const StageWeights& weights) {
    const auto fx = backbone->features(x);
    require(target_features.size() == fx.size(), "target feature stage count mismatch");
    auto total = torch::zeros({}, x.options());
    for (size_t i = 0; i < fx.size(); ++i) {
        require(fx[i].sizes() == target_features[i].sizes(), "perceptual feature shape mismatch");
        total = total + weights[i] * (fx[i] - target_features[i]).abs().mean();
    }
    return total;
}

torch::Tensor perceptual_distance(PerceptualBackbone& backbone, const torch::Tensor& x, const torch::Tensor& y,
                                  const StageWeights& weights) {
    require(x.sizes() == y.sizes(), "perceptual_distance needs equal shapes");
    const auto bx = as_batch(x);
    const auto by = as_batch(y);
    return perceptual_distance(backbone, bx, backbone->features(by), weights);
}

// ---------------------------------------------------------------------------
// SSIM / PSNR

namespace {

torch::Tensor to_gray(const torch::Tensor& t) {
    auto d = t.detach().to(torch::kCPU, torch::kFloat64);
    if (d.dim() == 2) return d;
    require(d.dim() == 3, "expected an H x W or C x H x W image");
    return d.mean(0);
}

torch::Tensor gaussian_window() {
    auto coords = torch::arange(kSsimWindow, torch::kFloat64) - static_cast<double>(kSsimWindow / 2);
    auto g = torch::exp(-coords.square() / (2.0 * kSsimSigma * kSsimSigma));
    g = g / g.sum();
    return torch::outer(g, g).view({1, 1, kSsimWindow, kSsimWindow});
}

}  // namespace

double ssim(const torch::Tensor& x, const torch::Tensor& y) {
    require(x.sizes() == y.sizes(), "ssim needs equal shapes");
    const auto gx = to_gray(x);
    const auto gy = to_gray(y);
    require(gx.size(0) >= kSsimWindow && gx.size(1) >= kSsimWindow, "image is smaller than the 11 x 11 SSIM window");

    constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
    constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
    const auto window = gaussian_window();
    auto filt = [&](const torch::Tensor& t) { return F::conv2d(t.view({1, 1, t.size(0), t.size(1)}), window); };

    const auto mu_x = filt(gx);
    const auto mu_y = filt(gy);
    const auto sxx = filt(gx * gx) - mu_x * mu_x;
    const auto syy = filt(gy * gy) - mu_y * mu_y;
    const auto sxy = filt(gx * gy) - mu_x * mu_y;
    const auto map = ((2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)) /
                     ((mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2));
    return map.mean().item<double>();
}

double psnr(const torch::Tensor& x, const torch::Tensor& y) {
    require(x.sizes() == y.sizes(), "psnr needs equal shapes");
    const double mse = (x.detach().to(torch::kFloat64) - y.detach().to(torch::kFloat64)).square().mean().item<double>();
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// ---------------------------------------------------------------------------
// FID

namespace {

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
    require(t.dim() == 2, "feature sets must be N x d");
    auto d = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    Eigen::MatrixXd m(d.size(0), d.size(1));
    std::memcpy(m.data(), d.transpose(0, 1).contiguous().data_ptr<double>(), sizeof(double) * d.numel());
    return m;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double fid(const torch::Tensor& features_a, const torch::Tensor& features_b) {
    const auto a = to_eigen(features_a);
    const auto b = to_eigen(features_b);
    require(a.cols() == b.cols(), "feature sets must share the feature dimension");
    require(a.rows() >= 2 && b.rows() >= 2, "FID needs at least two samples per set");
    require(a.allFinite() && b.allFinite(), "feature sets must be finite");

    const Eigen::RowVectorXd mu_a = a.colwise().mean();
    const Eigen::RowVectorXd mu_b = b.colwise().mean();
    const Eigen::MatrixXd ca = a.rowwise() - mu_a;
    const Eigen::MatrixXd cb = b.rowwise() - mu_b;
    Eigen::MatrixXd cov_a = (ca.transpose() * ca) / static_cast<double>(a.rows() - 1);
    Eigen::MatrixXd cov_b = (cb.transpose() * cb) / static_cast<double>(b.rows() - 1);
    require(cov_a.allFinite() && cov_b.allFinite(), "feature covariance is not finite");

    // Near-singular covariances get the same small diagonal offset on both sides.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(cov_a, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(cov_b, Eigen::EigenvaluesOnly);
    if (ea.eigenvalues().minCoeff() < 1e-10 || eb.eigenvalues().minCoeff() < 1e-10) {
        const auto jitter = 1e-6 * Eigen::MatrixXd::Identity(cov_a.rows(), cov_a.cols());
        cov_a += jitter;
        cov_b += jitter;
    }

    const Eigen::MatrixXd root_a = psd_sqrt(cov_a);
    const Eigen::MatrixXd inner = root_a * cov_b * root_a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double mean_term = (mu_a - mu_b).squaredNorm();
    const double value = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    require(std::isfinite(value), "FID evaluation produced a non-finite value");
    return std::max(0.0, value);
}

BackboneEmbedder::BackboneEmbedder(uint64_t seed) : backbone_(seed) {}

torch::Tensor BackboneEmbedder::embed(const torch::Tensor& images) {
    torch::NoGradGuard guard;
    const auto feats = backbone_->features(as_batch(images));
    const auto& s4 = feats[3];
    const auto& s5 = feats[4];
    return torch::cat({s4.mean({2, 3}), s5.mean({2, 3})}, 1);
}

// ---------------------------------------------------------------------------
// feature files

namespace {

constexpr char kFeatureMagic[8] = {'P', 'L', 'V', 'F', 'E', 'A', 'T', '1'};

void write_npy(const std::filesystem::path& path, const torch::Tensor& f) {
    std::ostringstream header;
    header << "{'descr': '<f4', 'fortran_order': False, 'shape': (" << f.size(0) << ", " << f.size(1) << "), }";
    std::string h = header.str();
    const size_t total = 10 + h.size() + 1;
    h.append((64 - total % 64) % 64, ' ');
    h.push_back('\n');
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write("\x93NUMPY\x01\x00", 8);
    const uint16_t len = static_cast<uint16_t>(h.size());
    out.write(reinterpret_cast<const char*>(&len), 2);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(reinterpret_cast<const char*>(f.data_ptr<float>()), static_cast<std::streamsize>(f.numel() * 4));
}

torch::Tensor read_npy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    require(in && std::memcmp(magic, "\x93NUMPY", 6) == 0, path.string() + ": not a .npy file");
    uint32_t header_len = 0;
    if (magic[6] == 1) {
        uint16_t l = 0;
        in.read(reinterpret_cast<char*>(&l), 2);
        header_len = l;
    } else {
        in.read(reinterpret_cast<char*>(&header_len), 4);
    }
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);

    std::smatch m;
    require(std::regex_search(header, m, std::regex("'descr':\\s*'([<|=]?)(f4|f8)'")),
            path.string() + ": only float32/float64 arrays are supported");
    const bool is_f8 = m[2] == "f8";
    require(header.find("'fortran_order': False") != std::string::npos, path.string() + ": Fortran order unsupported");
    require(std::regex_search(header, m, std::regex("'shape':\\s*\\((\\d+),\\s*(\\d+),?\\s*\\)")),
            path.string() + ": expected a 2-D array");
    const int64_t rows = std::stoll(m[1]);
    const int64_t cols = std::stoll(m[2]);
    auto t = torch::empty({rows, cols}, is_f8 ? torch::kFloat64 : torch::kFloat32);
    in.read(reinterpret_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
    require(static_cast<bool>(in), path.string() + ": truncated data");
    return t.to(torch::kFloat32);
}

}  // namespace

void write_features(const std::filesystem::path& path, const torch::Tensor& features) {
    require(features.dim() == 2, "features must be N x d");
    const auto f = features.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (path.extension() == ".npy") return write_npy(path, f);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const uint64_t rows = static_cast<uint64_t>(f.size(0));
    const uint64_t cols = static_cast<uint64_t>(f.size(1));
    out.write(kFeatureMagic, sizeof(kFeatureMagic));
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(f.data_ptr<float>()), static_cast<std::streamsize>(f.numel() * 4));
}

torch::Tensor read_features(const std::filesystem::path& path) {
    if (path.extension() == ".npy") return read_npy(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    uint64_t rows = 0;
    uint64_t cols = 0;
    in.read(magic, sizeof(magic));
    require(in && std::memcmp(magic, kFeatureMagic, sizeof(magic)) == 0, path.string() + ": not a feature file");
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    auto t = torch::empty({static_cast<int64_t>(rows), static_cast<int64_t>(cols)}, torch::kFloat32);
    in.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * 4));
    require(static_cast<bool>(in), path.string() + ": truncated feature data");
    return t;
}

// ---------------------------------------------------------------------------
// report

double MetricReport::mean_ssim() const {
    if (images.empty()) return 0.0;
    return std::accumulate(images.begin(), images.end(), 0.0, [](double a, const ImageScore& s) { return a + s.ssim; }) /
           static_cast<double>(images.size());
}

double MetricReport::mean_psnr() const {
    if (images.empty()) return 0.0;
    return std::accumulate(images.begin(), images.end(), 0.0, [](double a, const ImageScore& s) { return a + s.psnr; }) /
           static_cast<double>(images.size());
}

namespace {
std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}
}  // namespace

std::string MetricReport::to_text() const {
    std::ostringstream os;
    os << "count = " << images.size() << '\n';
    if (paired) {
        os << "ssim = " << fmt(mean_ssim()) << '\n';
        os << "psnr = " << fmt(mean_psnr()) << '\n';
    }
    if (fid) os << "fid = " << fmt(*fid) << '\n';
    return os.str();
}

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    if (!paired) {
        os << "name\n";
        for (const auto& s : images) os << s.name << '\n';
        return os.str();
    }
    os << "name,ssim,psnr\n";
    for (const auto& s : images) os << s.name << ',' << fmt(s.ssim) << ',' << fmt(s.psnr) << '\n';
    return os.str();
}

}  // namespace plvton
