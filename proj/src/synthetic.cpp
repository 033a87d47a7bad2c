#include "plvton/synthetic.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "plvton/image_io.hpp"

namespace plvton::synth {

namespace fs = std::filesystem;

namespace {

using Rgb = std::array<float, 3>;

struct Garment {
    int pattern = 0;  // 0 solid, 1 horizontal stripes, 2 vertical stripes, 3 checker
    Rgb base{};
    Rgb accent{};
    double period = 0.2;
    double hip_ratio = 0.85;    // hip half-width / shoulder half-width
    double sleeve_ratio = 0.5;  // sleeve length / shoulder half-width
    bool logo = false;

    Rgb color(double u, double v) const {
        bool alt = false;
        switch (pattern) {
            case 1: alt = std::fmod(std::floor(v / period), 2.0) != 0.0; break;
            case 2: alt = std::fmod(std::floor((u + 2.0) / period), 2.0) != 0.0; break;
            case 3: alt = std::fmod(std::floor(v / period) + std::floor((u + 2.0) / period), 2.0) != 0.0; break;
            default: break;
        }
        if (logo && (u * u + (v - 0.3) * (v - 0.3)) < 0.03) return accent;
        return alt ? accent : base;
    }
};

struct Body {
    double cx, neck_y, shoulder, hip, hip_y;
    double arm_angle[2];
    double forearm_angle[2];
};

Rgb random_color(std::mt19937_64& rng, float lo, float hi) {
    std::uniform_real_distribution<float> d(lo, hi);
    return {d(rng), d(rng), d(rng)};
}

cv::Point pt(double x, double y) { return {static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y))}; }

/// Draws the garment silhouette into `canvas` with value `value`.
/// Sleeves leave the shoulders at the given angles from vertical (radians, outward).
void draw_garment(cv::Mat& canvas, double cx, double neck_y, double shoulder, double hip, double hip_y,
                  const double sleeve_angle[2], double sleeve_len, double sleeve_width, double scale, uchar value) {
    const double neck_half = 0.32 * shoulder;
    std::vector<cv::Point> torso = {
        pt(cx - neck_half, neck_y),
        pt(cx - shoulder, neck_y + 0.18 * shoulder),
        pt(cx - shoulder + 3 * scale, neck_y + 1.0 * shoulder),
        pt(cx - hip, hip_y),
        pt(cx + hip, hip_y),
        pt(cx + shoulder - 3 * scale, neck_y + 1.0 * shoulder),
        pt(cx + shoulder, neck_y + 0.18 * shoulder),
        pt(cx + neck_half, neck_y),
        pt(cx, neck_y + 0.35 * shoulder),
    };
    cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{torso}, cv::Scalar(value));
    for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? -1.0 : 1.0;
        const double sx = cx + sign * (shoulder - 0.15 * shoulder);
        const double sy = neck_y + 0.3 * shoulder;
        const double ex = sx + sign * std::sin(sleeve_angle[side]) * sleeve_len;
        const double ey = sy + std::cos(sleeve_angle[side]) * sleeve_len;
        cv::line(canvas, pt(sx, sy), pt(ex, ey), cv::Scalar(value), static_cast<int>(std::lround(sleeve_width)),
                 cv::LINE_8);
    }
}

}  // namespace

SyntheticRecord generate(int64_t index, const SyntheticOptions& options) {
    const int64_t H = options.height;
    const int64_t W = options.width;
    require(H >= 32 && W >= 24, "synthetic records need at least 32 x 24 pixels");
    std::mt19937_64 rng(options.seed * 1000003ULL + static_cast<uint64_t>(index));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const double sy = static_cast<double>(H) / 256.0;
    const double sx = static_cast<double>(W) / 192.0;
    const double s = std::min(sx, sy);

    Garment g;
    g.pattern = static_cast<int>(rng() % 4);
    g.base = random_color(rng, 0.1f, 0.9f);
    g.accent = random_color(rng, 0.1f, 0.9f);
    g.period = uniform(0.12, 0.3);
    g.hip_ratio = uniform(0.75, 0.95);
    g.sleeve_ratio = uniform(0.45, 0.8);
    g.logo = unit(rng) < 0.4;

    Body b{};
    b.cx = W / 2.0 + uniform(-26, 26) * sx;
    b.neck_y = (68 + uniform(-12, 12)) * sy;
    b.shoulder = (36 + uniform(-7, 9)) * s;
    b.hip = b.shoulder * g.hip_ratio;
    b.hip_y = b.neck_y + (92 + uniform(-8, 8)) * sy;
    for (int side = 0; side < 2; ++side) {
        b.arm_angle[side] = uniform(0.15, 0.55);
        b.forearm_angle[side] = b.arm_angle[side] + uniform(-0.35, 0.15);
    }

    const Rgb skin = {static_cast<float>(uniform(0.55, 0.95)), static_cast<float>(uniform(0.4, 0.7)),
                      static_cast<float>(uniform(0.3, 0.55))};
    const Rgb hair = random_color(rng, 0.05f, 0.35f);
    const Rgb pants = random_color(rng, 0.1f, 0.5f);
    const Rgb backdrop = random_color(rng, 0.75f, 0.95f);

    // ---- person layout ----
    cv::Mat labels(static_cast<int>(H), static_cast<int>(W), CV_8U, cv::Scalar(0));
    const int lower = static_cast<int>(class_index(ParsingClass::LowerBody));
    const int clothes = static_cast<int>(class_index(ParsingClass::UpperClothes));
    const int face = static_cast<int>(class_index(ParsingClass::Face));
    const int hair_id = static_cast<int>(class_index(ParsingClass::Hair));

    std::vector<cv::Point> legs = {pt(b.cx - b.hip - 2 * s, b.hip_y - 6 * sy), pt(b.cx + b.hip + 2 * s, b.hip_y - 6 * sy),
                                   pt(b.cx + b.hip + 6 * s, H), pt(b.cx - b.hip - 6 * s, H)};
    cv::fillPoly(labels, std::vector<std::vector<cv::Point>>{legs}, cv::Scalar(lower));

    Pose pose(kNumKeypoints);
    const double upper_len = 44 * s;
    const double fore_len = 40 * s;
    const double arm_width = 10 * s;
    std::array<cv::Point2d, 2> shoulders{}, elbows{}, wrists{};
    for (int side = 0; side < 2; ++side) {
        // side 0 is the image-left arm, i.e. the person's right arm
        const double sign = side == 0 ? -1.0 : 1.0;
        shoulders[side] = {b.cx + sign * (b.shoulder - 0.15 * b.shoulder), b.neck_y + 0.3 * b.shoulder};
        elbows[side] = {shoulders[side].x + sign * std::sin(b.arm_angle[side]) * upper_len,
                        shoulders[side].y + std::cos(b.arm_angle[side]) * upper_len};
        wrists[side] = {elbows[side].x + sign * std::sin(b.forearm_angle[side]) * fore_len,
                        elbows[side].y + std::cos(b.forearm_angle[side]) * fore_len};
        const int arm_class = static_cast<int>(class_index(side == 0 ? ParsingClass::RightArm : ParsingClass::LeftArm));
        const int thickness = static_cast<int>(std::lround(arm_width));
        cv::line(labels, pt(shoulders[side].x, shoulders[side].y), pt(elbows[side].x, elbows[side].y),
                 cv::Scalar(arm_class), thickness);
        cv::line(labels, pt(elbows[side].x, elbows[side].y), pt(wrists[side].x, wrists[side].y), cv::Scalar(arm_class),
                 thickness);
        cv::circle(labels, pt(wrists[side].x, wrists[side].y), static_cast<int>(std::lround(6 * s)),
                   cv::Scalar(arm_class), cv::FILLED);
    }

    // neck, then the garment over it, then head
    cv::rectangle(labels, pt(b.cx - 7 * s, b.neck_y - 14 * sy), pt(b.cx + 7 * s, b.neck_y + 8 * sy), cv::Scalar(face),
                  cv::FILLED);
    const double sleeve_len = g.sleeve_ratio * b.shoulder;
    draw_garment(labels, b.cx, b.neck_y, b.shoulder, b.hip, b.hip_y, b.arm_angle, sleeve_len, 15 * s, s,
                 static_cast<uchar>(clothes));
    const cv::Point head = pt(b.cx, b.neck_y - 30 * sy);
    cv::ellipse(labels, pt(b.cx, b.neck_y - 38 * sy), cv::Size(static_cast<int>(20 * s), static_cast<int>(17 * sy)), 0,
                0, 360, cv::Scalar(hair_id), cv::FILLED);
    cv::ellipse(labels, head, cv::Size(static_cast<int>(16 * s), static_cast<int>(20 * sy)), 0, 0, 360,
                cv::Scalar(face), cv::FILLED);
    cv::ellipse(labels, pt(b.cx, b.neck_y - 45 * sy), cv::Size(static_cast<int>(17 * s), static_cast<int>(9 * sy)), 0,
                180, 360, cv::Scalar(hair_id), cv::FILLED);

    // ---- person colours ----
    auto person = torch::empty({3, H, W}, torch::kFloat32);
    auto pa = person.accessor<float, 3>();
    const double torso_len = b.hip_y - b.neck_y;
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
            const int label = labels.at<uchar>(static_cast<int>(y), static_cast<int>(x));
            Rgb c{};
            switch (label) {
                case 0: {
                    const float shade = 1.0f - 0.08f * static_cast<float>(y) / static_cast<float>(H);
                    c = {backdrop[0] * shade, backdrop[1] * shade, backdrop[2] * shade};
                    break;
                }
                case 1: c = hair; break;
                case 2: c = skin; break;
                case 3: {
                    const double u = (static_cast<double>(x) - b.cx) / b.shoulder;
                    const double v = (static_cast<double>(y) - b.neck_y) / torso_len;
                    const bool on_torso = std::abs(u) < 1.0 - 0.1 * v && v > -0.05;
                    c = on_torso ? g.color(u, v) : g.base;
                    break;
                }
                case 4:
                case 5: c = {skin[0] * 0.95f, skin[1] * 0.95f, skin[2] * 0.95f}; break;
                default: c = pants; break;
            }
            for (int k = 0; k < 3; ++k) pa[k][y][x] = c[static_cast<size_t>(k)];
        }
    }
    // eyes
    for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? -1.0 : 1.0;
        const int64_t ex = std::lround(b.cx + sign * 6 * s);
        const int64_t ey = std::lround(b.neck_y - 32 * sy);
        for (int64_t dy = -1; dy <= 1; ++dy)
            for (int64_t dx = -1; dx <= 1; ++dx)
                if (ey + dy >= 0 && ey + dy < H && ex + dx >= 0 && ex + dx < W)
                    for (int k = 0; k < 3; ++k) pa[k][ey + dy][ex + dx] = 0.1f;
    }

    // ---- shop image: the same garment, flat, at a canonical placement ----
    cv::Mat shop_mask(static_cast<int>(H), static_cast<int>(W), CV_8U, cv::Scalar(0));
    const double shop_zoom = uniform(0.65, 1.0);
    const double shop_cx = W / 2.0 + uniform(-18, 18) * sx;
    const double shop_neck = (42 + uniform(-10, 24)) * sy;
    const double shop_shoulder = 58 * s * shop_zoom;
    const double shop_hip = shop_shoulder * g.hip_ratio;
    const double shop_hip_y = shop_neck + 165 * sy * shop_zoom;
    const double shop_sleeve_angle[2] = {0.95, 0.95};
    draw_garment(shop_mask, shop_cx, shop_neck, shop_shoulder, shop_hip, shop_hip_y, shop_sleeve_angle,
                 g.sleeve_ratio * shop_shoulder, 26 * s * shop_zoom, s * 1.7 * shop_zoom, 1);
    auto clothing = torch::ones({3, H, W}, torch::kFloat32);
    auto ca = clothing.accessor<float, 3>();
    auto cloth_mask = torch::zeros({1, H, W}, torch::kFloat32);
    auto ma = cloth_mask.accessor<float, 3>();
    const double shop_len = shop_hip_y - shop_neck;
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
            if (shop_mask.at<uchar>(static_cast<int>(y), static_cast<int>(x)) == 0) continue;
            const double u = (static_cast<double>(x) - shop_cx) / shop_shoulder;
            const double v = (static_cast<double>(y) - shop_neck) / shop_len;
            const bool on_torso = std::abs(u) < 1.0 - 0.1 * v && v > -0.05;
            const Rgb c = on_torso ? g.color(u, v) : g.base;
            for (int k = 0; k < 3; ++k) ca[k][y][x] = c[static_cast<size_t>(k)];
            ma[0][y][x] = 1.0f;
        }
    }

    // ---- pose (OpenPose COCO-18 order) ----
    auto set = [&](int j, double x, double y) { pose[static_cast<size_t>(j)] = {x, y, true}; };
    set(0, b.cx, b.neck_y - 26 * sy);
    set(1, b.cx, b.neck_y);
    set(2, shoulders[0].x, shoulders[0].y);
    set(3, elbows[0].x, elbows[0].y);
    set(4, wrists[0].x, wrists[0].y);
    set(5, shoulders[1].x, shoulders[1].y);
    set(6, elbows[1].x, elbows[1].y);
    set(7, wrists[1].x, wrists[1].y);
    set(8, b.cx - b.hip + 6 * s, b.hip_y);
    set(9, b.cx - b.hip + 4 * s, b.hip_y + 45 * sy);
    set(10, b.cx - b.hip + 2 * s, b.hip_y + 88 * sy);
    set(11, b.cx + b.hip - 6 * s, b.hip_y);
    set(12, b.cx + b.hip - 4 * s, b.hip_y + 45 * sy);
    set(13, b.cx + b.hip - 2 * s, b.hip_y + 88 * sy);
    set(14, b.cx - 6 * s, b.neck_y - 32 * sy);
    set(15, b.cx + 6 * s, b.neck_y - 32 * sy);
    set(16, b.cx - 15 * s, b.neck_y - 30 * sy);
    set(17, b.cx + 15 * s, b.neck_y - 30 * sy);
    for (auto& kp : pose) {
        if (kp.x < 0 || kp.y < 0 || kp.x > static_cast<double>(W - 1) || kp.y > static_cast<double>(H - 1)) {
            kp.visible = false;
        }
    }

    auto label_tensor =
        torch::from_blob(labels.data, {H, W}, torch::kUInt8).to(torch::kLong).clone();
    return {person, clothing, cloth_mask, label_tensor, std::move(pose)};
}

void write_dataset(const fs::path& root, int64_t count, const SyntheticOptions& options) {
    require(count >= 1, "synthetic dataset needs at least one record");
    for (const char* sub : {"image", "cloth", "cloth-mask", "image-parse", "pose"}) fs::create_directories(root / sub);

    auto name = [](int64_t i, int kind) {
        std::ostringstream os;
        os << std::setw(6) << std::setfill('0') << i << '_' << kind << ".png";
        return os.str();
    };
    std::ofstream pairs(root / "pairs.txt");
    std::ofstream test_pairs(root / "test_pairs.txt");
    for (int64_t i = 0; i < count; ++i) {
        const auto rec = generate(i, options);
        const auto person_name = name(i, 0);
        const auto cloth_name = name(i, 1);
        io::write_rgb(root / "image" / person_name, rec.person);
        io::write_rgb(root / "cloth" / cloth_name, rec.clothing);
        io::write_rgb(root / "cloth-mask" / cloth_name, rec.clothing_mask);
        io::write_label_png(root / "image-parse" / person_name, rec.labels);
        write_pose_json(root / "pose" / (fs::path(person_name).stem().string() + ".json"), rec.pose);
        pairs << person_name << ' ' << cloth_name << '\n';
        test_pairs << person_name << ' ' << name((i + 1) % count, 1) << '\n';
    }
}

}  // namespace plvton::synth
