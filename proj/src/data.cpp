#include "dcap/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dcap/errors.hpp"
#include "dcap/rng.hpp"

namespace fs = std::filesystem;

namespace dcap {

YoloLabelLine xyxy_to_cxcywh(int class_id, const BoxXYXY& box, int img_size) {
    if (box.area() <= 0) throw ValueError("xyxy_to_cxcywh: zero-area box");
    const double s = img_size;
    return {class_id, (box.x1 + box.x2) / (2 * s), (box.y1 + box.y2) / (2 * s),
            (box.x2 - box.x1) / s, (box.y2 - box.y1) / s};
}

BoxXYXY cxcywh_to_xyxy(const YoloLabelLine& line, int img_size) {
    if (line.w <= 0 || line.h <= 0) throw ValueError("cxcywh_to_xyxy: non-positive size");
    const double s = img_size;
    return {(line.cx - line.w / 2) * s, (line.cy - line.h / 2) * s,
            (line.cx + line.w / 2) * s, (line.cy + line.h / 2) * s};
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::string& buf, std::size_t& pos, const std::string& path) {
    while (pos < buf.size()) {
        if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
            ++pos;
        } else if (buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    if (pos >= buf.size())
        throw IoError(path + ": truncated header at byte " + std::to_string(pos));
    std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    return buf.substr(start, pos - start);
}

int parse_header_int(const std::string& tok, const std::string& path, std::size_t pos) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw IoError(path + ": bad header token '" + tok + "' near byte " + std::to_string(pos));
    }
}

} // namespace

Image read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    std::size_t pos = 0;
    const std::string magic = next_token(buf, pos, path);
    if (magic != "P5")
        throw IoError(path + ": unsupported format '" + magic + "' (want binary P5) at byte 0");
    const int w = parse_header_int(next_token(buf, pos, path), path, pos);
    const int h = parse_header_int(next_token(buf, pos, path), path, pos);
    const int maxval = parse_header_int(next_token(buf, pos, path), path, pos);
    if (w <= 0 || h <= 0)
        throw IoError(path + ": non-positive dimensions at byte " + std::to_string(pos));
    if (maxval != 255)
        throw IoError(path + ": unsupported maxval " + std::to_string(maxval));
    ++pos; // single whitespace byte after maxval
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (buf.size() - pos < need)
        throw IoError(path + ": truncated payload at byte " + std::to_string(buf.size()) +
                      " (need " + std::to_string(pos + need) + " bytes)");

    Image img;
    img.w = w;
    img.h = h;
    img.pix.resize(need);
    for (std::size_t i = 0; i < need; ++i)
        img.pix[i] = static_cast<float>(static_cast<unsigned char>(buf[pos + i])) / 255.0f;
    return img;
}

void write_pgm(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "P5\n" << img.w << " " << img.h << "\n255\n";
    for (float v : img.pix) {
        const float c = std::min(1.0f, std::max(0.0f, v));
        f.put(static_cast<char>(std::lround(c * 255.0f)));
    }
    if (!f) throw IoError("write failed for " + path);
}

std::vector<std::pair<int, BoxXYXY>> parse_labels(const std::string& path, int img_size) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::vector<std::pair<int, BoxXYXY>> out;
    std::string line;
    int lineno = 0;
    const double slack = 1e-6;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        YoloLabelLine y;
        if (!(ls >> y.class_id >> y.cx >> y.cy >> y.w >> y.h)) {
            throw IoError(path + ":" + std::to_string(lineno) + ": malformed label line");
        }
        std::string extra;
        if (ls >> extra)
            throw IoError(path + ":" + std::to_string(lineno) + ": trailing token '" + extra + "'");
        if (y.class_id < 0 || y.class_id > 1)
            throw IoError(path + ":" + std::to_string(lineno) + ": class out of range");
        if (y.w <= 0 || y.h <= 0)
            throw IoError(path + ":" + std::to_string(lineno) + ": non-positive box size");
        if (y.cx - y.w / 2 < -slack || y.cx + y.w / 2 > 1 + slack || y.cy - y.h / 2 < -slack ||
            y.cy + y.h / 2 > 1 + slack)
            throw IoError(path + ":" + std::to_string(lineno) + ": box escapes the unit square");
        out.emplace_back(y.class_id, cxcywh_to_xyxy(y, img_size));
    }
    return out;
}

void write_labels(const std::string& path, const std::vector<std::pair<int, BoxXYXY>>& boxes,
                  int img_size) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    char buf[96];
    for (const auto& [cls, box] : boxes) {
        const auto y = xyxy_to_cxcywh(cls, box, img_size);
        std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f\n", y.class_id, y.cx, y.cy, y.w,
                      y.h);
        f << buf;
    }
}

Splits split_dataset(const std::vector<std::string>& ids, std::uint64_t seed) {
    if (ids.size() < 10) throw ValueError("split_dataset: need at least 10 items");
    std::vector<std::string> shuffled = ids;
    Rng rng(seed);
    rng.shuffle(shuffled.begin(), shuffled.end());
    const std::size_t n = shuffled.size();
    const std::size_t n_train = static_cast<std::size_t>(0.7 * static_cast<double>(n));
    const std::size_t n_val = static_cast<std::size_t>(0.2 * static_cast<double>(n));
    Splits s;
    s.train.assign(shuffled.begin(), shuffled.begin() + static_cast<long>(n_train));
    s.val.assign(shuffled.begin() + static_cast<long>(n_train),
                 shuffled.begin() + static_cast<long>(n_train + n_val));
    s.test.assign(shuffled.begin() + static_cast<long>(n_train + n_val), shuffled.end());
    return s;
}

namespace {

struct Placement {
    int x, y, w, h;
};

bool overlaps(const Placement& a, const Placement& b) {
    return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
}

// Draws one instance into img, records its tight box and pixel mask.
void draw_instance(Image& img, const Placement& p, int kind, const SynthSpec& spec, Rng& rng,
                   std::vector<std::uint8_t>& mask) {
    mask.assign(static_cast<std::size_t>(img.h * img.w), 0);
    if (kind == 0 && !spec.ellipse_mode) {
        // oriented sinusoidal wave patch
        const double lam = rng.uniform(spec.wavelength_min, spec.wavelength_max);
        const double amp = rng.uniform(spec.amplitude_min, spec.amplitude_max);
        const double theta = rng.uniform(spec.orientation_min, spec.orientation_max);
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int y = p.y; y < p.y + p.h; ++y)
            for (int x = p.x; x < p.x + p.w; ++x) {
                const double u = ct * (x - p.x) + st * (y - p.y);
                const double v = amp * (0.5 + 0.5 * std::sin(2 * 3.14159265358979323846 * u / lam));
                img.at(y, x) = std::min(1.0f, img.at(y, x) + static_cast<float>(v));
                mask[static_cast<std::size_t>(y * img.w + x)] = 1;
            }
    } else if (kind == 0) {
        // filled ellipse inscribed in the box
        const double amp = rng.uniform(spec.amplitude_min, spec.amplitude_max);
        const double cx = p.x + p.w / 2.0, cy = p.y + p.h / 2.0;
        const double rx = p.w / 2.0, ry = p.h / 2.0;
        for (int y = p.y; y < p.y + p.h; ++y)
            for (int x = p.x; x < p.x + p.w; ++x) {
                const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
                if (dx * dx + dy * dy > 1.0) continue;
                img.at(y, x) = std::min(1.0f, img.at(y, x) + static_cast<float>(amp));
                mask[static_cast<std::size_t>(y * img.w + x)] = 1;
            }
    } else if (rng.uniform() < 0.5) {
        // bright round blob
        const double amp = rng.uniform(spec.clutter_intensity_min, spec.clutter_intensity_max);
        const double cx = p.x + p.w / 2.0, cy = p.y + p.h / 2.0;
        const double r = std::min(p.w, p.h) / 2.0;
        for (int y = p.y; y < p.y + p.h; ++y)
            for (int x = p.x; x < p.x + p.w; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                const double d2 = (dx * dx + dy * dy) / (r * r);
                if (d2 > 1.0) continue;
                img.at(y, x) = std::min(1.0f, img.at(y, x) + static_cast<float>(amp * (1 - 0.5 * d2)));
                mask[static_cast<std::size_t>(y * img.w + x)] = 1;
            }
    } else {
        // diagonal bright streak through the box
        const double amp = rng.uniform(spec.clutter_intensity_min, spec.clutter_intensity_max);
        const bool flip = rng.uniform() < 0.5;
        const int steps = std::max(p.w, p.h) * 2;
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            const int x = p.x + static_cast<int>(t * (p.w - 1));
            const int y = p.y + static_cast<int>((flip ? 1 - t : t) * (p.h - 1));
            for (int dy = 0; dy <= 1 && y + dy < p.y + p.h; ++dy) {
                img.at(y + dy, x) = std::min(1.0f, img.at(y + dy, x) + static_cast<float>(amp));
                mask[static_cast<std::size_t>((y + dy) * img.w + x)] = 1;
            }
        }
    }
}

} // namespace

SynthImage synth_make_image(const SynthSpec& spec, int index) {
    if (spec.objects_min > spec.objects_max || spec.clutter_min > spec.clutter_max ||
        spec.wavelength_min > spec.wavelength_max || spec.amplitude_min > spec.amplitude_max)
        throw ValueError("synth_make_image: empty parameter range");
    // one independent stream per image keeps generation order-free
    Rng rng(spec.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(index) + 1);

    SynthImage out;
    Image& img = out.labeled.pixels;
    img.h = img.w = spec.image_size;
    img.pix.resize(static_cast<std::size_t>(img.h * img.w));
    for (auto& v : img.pix)
        v = std::min(1.0f, std::max(0.0f, static_cast<float>(0.15 + spec.noise_sigma * rng.normal())));

    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "img%04d", index);
    out.labeled.id = idbuf;

    const int n_obj = static_cast<int>(rng.uniform_int(spec.objects_min, spec.objects_max));
    const int n_clutter = static_cast<int>(rng.uniform_int(spec.clutter_min, spec.clutter_max));

    std::vector<Placement> placed;
    auto place = [&](int kind) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            Placement p;
            p.w = static_cast<int>(rng.uniform_int(8, std::min(24, spec.image_size / 2)));
            p.h = static_cast<int>(rng.uniform_int(8, std::min(24, spec.image_size / 2)));
            p.x = static_cast<int>(rng.uniform_int(0, spec.image_size - p.w));
            p.y = static_cast<int>(rng.uniform_int(0, spec.image_size - p.h));
            bool clash = false;
            for (const auto& q : placed) clash |= overlaps(p, q);
            if (clash) continue;
            placed.push_back(p);
            std::vector<std::uint8_t> mask;
            draw_instance(img, p, kind, spec, rng, mask);
            out.labeled.boxes.emplace_back(
                kind, BoxXYXY{static_cast<double>(p.x), static_cast<double>(p.y),
                              static_cast<double>(p.x + p.w), static_cast<double>(p.y + p.h)});
            out.instance_masks.push_back(std::move(mask));
            return;
        }
        throw ValueError("synth_make_image: could not place instance (image too crowded)");
    };

    for (int i = 0; i < n_obj; ++i) place(0);
    for (int i = 0; i < n_clutter; ++i) place(1);
    return out;
}

std::vector<std::string> synth_generate(const SynthSpec& spec, const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "images", ec);
    fs::create_directories(fs::path(out_dir) / "labels", ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

    std::vector<std::string> ids;
    std::ofstream manifest(fs::path(out_dir) / "manifest.csv");
    if (!manifest) throw IoError("cannot write manifest in " + out_dir);
    manifest << "id,objects,noise\n";
    for (int i = 0; i < spec.count; ++i) {
        auto s = synth_make_image(spec, i);
        const std::string& id = s.labeled.id;
        write_pgm((fs::path(out_dir) / "images" / (id + ".pgm")).string(), s.labeled.pixels);
        write_labels((fs::path(out_dir) / "labels" / (id + ".txt")).string(), s.labeled.boxes,
                     spec.image_size);
        int n0 = 0, n1 = 0;
        for (const auto& [cls, box] : s.labeled.boxes) (cls == 0 ? n0 : n1) += 1;
        manifest << id << "," << n0 << "," << n1 << "\n";
        ids.push_back(id);
    }
    return ids;
}

void write_split_files(const std::string& out_dir, const Splits& splits) {
    fs::create_directories(fs::path(out_dir) / "splits");
    auto write = [&](const char* name, const std::vector<std::string>& ids) {
        std::ofstream f(fs::path(out_dir) / "splits" / name);
        if (!f) throw IoError(std::string("cannot write split file ") + name);
        for (const auto& id : ids) f << id << "\n";
    };
    write("train.txt", splits.train);
    write("val.txt", splits.val);
    write("test.txt", splits.test);
}

std::vector<std::string> read_split_file(const std::string& out_dir, const std::string& name) {
    const auto path = fs::path(out_dir) / "splits" / (name + ".txt");
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) ids.push_back(line);
    return ids;
}

std::vector<LabeledImage> load_corpus(const std::string& dir, const std::vector<std::string>& ids) {
    std::vector<LabeledImage> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        LabeledImage li;
        li.id = id;
        li.pixels = read_pgm((fs::path(dir) / "images" / (id + ".pgm")).string());
        li.boxes = parse_labels((fs::path(dir) / "labels" / (id + ".txt")).string(), li.pixels.w);
        out.push_back(std::move(li));
    }
    return out;
}

} // namespace dcap
