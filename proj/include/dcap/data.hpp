#pragma once

// Single-band image IO (binary PGM), YOLO-style normalized labels,
// deterministic dataset splitting, and the synthetic corpus generator.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dcap/metrics.hpp"

namespace dcap {

struct Image {
    int h = 0, w = 0;
    std::vector<float> pix; // row-major intensities in [0,1]

    float& at(int y, int x) { return pix[static_cast<std::size_t>(y * w + x)]; }
    float at(int y, int x) const { return pix[static_cast<std::size_t>(y * w + x)]; }
};

struct LabeledImage {
    std::string id;
    Image pixels;
    std::vector<std::pair<int, BoxXYXY>> boxes; // class 0: object, 1: noise
};

struct YoloLabelLine {
    int class_id = 0;
    double cx = 0, cy = 0, w = 0, h = 0; // normalized to image size
};

YoloLabelLine xyxy_to_cxcywh(int class_id, const BoxXYXY& box, int img_size);
BoxXYXY cxcywh_to_xyxy(const YoloLabelLine& line, int img_size);

Image read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Image& img);

std::vector<std::pair<int, BoxXYXY>> parse_labels(const std::string& path, int img_size);
void write_labels(const std::string& path, const std::vector<std::pair<int, BoxXYXY>>& boxes,
                  int img_size);

struct Splits {
    std::vector<std::string> train, val, test;
};

// Deterministic 70:20:10 split: shuffle by seed, sizes floor(0.7n) /
// floor(0.2n) / remainder. Needs at least 10 ids.
Splits split_dataset(const std::vector<std::string>& ids, std::uint64_t seed);

struct SynthSpec {
    int count = 64;
    int image_size = 64;
    int objects_min = 1, objects_max = 2;
    double wavelength_min = 4, wavelength_max = 8;
    double amplitude_min = 0.4, amplitude_max = 0.7;
    double orientation_min = 0, orientation_max = 3.14159265358979323846;
    int clutter_min = 0, clutter_max = 2;
    double clutter_intensity_min = 0.5, clutter_intensity_max = 0.9;
    double noise_sigma = 0.05;
    bool ellipse_mode = false; // class-0 instances as filled ellipses instead of wave patches
    std::uint64_t seed = 0;
};

// One generated image plus per-instance pixel masks (same order as boxes),
// exposed so tests can check that each box tightly covers its pattern.
struct SynthImage {
    LabeledImage labeled;
    std::vector<std::vector<std::uint8_t>> instance_masks; // h*w each, 1 where drawn
};

SynthImage synth_make_image(const SynthSpec& spec, int index);

// Writes images/{id}.pgm, labels/{id}.txt, manifest.csv under out_dir and
// returns the ordered id list. Bit-reproducible from (spec, seed).
std::vector<std::string> synth_generate(const SynthSpec& spec, const std::string& out_dir);

void write_split_files(const std::string& out_dir, const Splits& splits);
std::vector<std::string> read_split_file(const std::string& out_dir, const std::string& name);

std::vector<LabeledImage> load_corpus(const std::string& dir, const std::vector<std::string>& ids);

} // namespace dcap
