#include "dcap/runconfig.hpp"

#include <fstream>
#include <sstream>

#include "dcap/errors.hpp"
#include "dcap/serialize.hpp"

namespace dcap {

namespace {

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ConfigError("config: bad integer '" + item + "' in " + key);
        }
    }
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

int parse_int(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const int r = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer '" + v + "' for " + key);
    }
}

double parse_real(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number '" + v + "' for " + key);
    }
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad boolean '" + v + "' for " + key);
}

} // namespace

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));

        if (key == "variant") cfg.model.variant = val;
        else if (key == "dilations") cfg.model.dilations = parse_int_list(val, key);
        else if (key == "mdrc_placement") cfg.model.mdrc_placement = val;
        else if (key == "channels") cfg.model.channels = parse_int_list(val, key);
        else if (key == "num_classes") cfg.model.num_classes = parse_int(val, key);
        else if (key == "image_size") {
            cfg.model.image_size = parse_int(val, key);
            cfg.synth.image_size = cfg.model.image_size;
        } else if (key == "anchor_w") cfg.model.anchor_w = parse_real(val, key);
        else if (key == "anchor_h") cfg.model.anchor_h = parse_real(val, key);
        else if (key == "seed") {
            const long s = parse_int(val, key);
            if (s < 0) throw ConfigError("config: seed must be non-negative");
            cfg.model.seed = static_cast<std::uint64_t>(s);
            cfg.synth.seed = static_cast<std::uint64_t>(s);
        } else if (key == "epochs") cfg.epochs = parse_int(val, key);
        else if (key == "lr") cfg.lr = parse_real(val, key);
        else if (key == "batch_size") cfg.batch_size = parse_int(val, key);
        else if (key == "count") cfg.synth.count = parse_int(val, key);
        else if (key == "objects_min") cfg.synth.objects_min = parse_int(val, key);
        else if (key == "objects_max") cfg.synth.objects_max = parse_int(val, key);
        else if (key == "wavelength_min") cfg.synth.wavelength_min = parse_real(val, key);
        else if (key == "wavelength_max") cfg.synth.wavelength_max = parse_real(val, key);
        else if (key == "amplitude_min") cfg.synth.amplitude_min = parse_real(val, key);
        else if (key == "amplitude_max") cfg.synth.amplitude_max = parse_real(val, key);
        else if (key == "orientation_min") cfg.synth.orientation_min = parse_real(val, key);
        else if (key == "orientation_max") cfg.synth.orientation_max = parse_real(val, key);
        else if (key == "clutter_min") cfg.synth.clutter_min = parse_int(val, key);
        else if (key == "clutter_max") cfg.synth.clutter_max = parse_int(val, key);
        else if (key == "clutter_intensity_min")
            cfg.synth.clutter_intensity_min = parse_real(val, key);
        else if (key == "clutter_intensity_max")
            cfg.synth.clutter_intensity_max = parse_real(val, key);
        else if (key == "noise_sigma") cfg.synth.noise_sigma = parse_real(val, key);
        else if (key == "ellipse_mode") cfg.synth.ellipse_mode = parse_bool(val, key);
        else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (cfg.epochs < 0) throw ConfigError("config: epochs must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (cfg.lr < 0) throw ConfigError("config: lr must be >= 0");
    cfg.model.validate();
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str());
}

std::string RunConfig::canonical_text() const {
    std::ostringstream ss;
    ss << model.canonical_text();
    ss << "seed=" << model.seed << "\nepochs=" << epochs << "\nlr=" << lr << "\nbatch_size="
       << batch_size << "\n";
    return ss.str();
}

std::uint64_t RunConfig::hash() const { return config_hash(canonical_text()); }

} // namespace dcap
