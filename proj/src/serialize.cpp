#include "dcap/serialize.hpp"

#include <cstring>
#include <fstream>

#include "dcap/errors.hpp"

namespace dcap {

namespace {

constexpr char kTensorMagic[6] = {'D', 'C', 'A', 'P', 'T', '\0'};
constexpr char kCkptMagic[6] = {'D', 'C', 'A', 'P', 'C', '\0'};

void put_u32(std::ostream& f, std::uint32_t v) {
    char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                 static_cast<char>(v >> 24)};
    f.write(b, 4);
}

std::uint32_t get_u32(std::istream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) throw IoError(path + ": truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_u64(std::ostream& f, std::uint64_t v) {
    put_u32(f, static_cast<std::uint32_t>(v));
    put_u32(f, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t get_u64(std::istream& f, const std::string& path) {
    const std::uint64_t lo = get_u32(f, path);
    const std::uint64_t hi = get_u32(f, path);
    return lo | (hi << 32);
}

void write_tensor_body(std::ostream& f, const Tensor& t) {
    f.write(kTensorMagic, 6);
    f.put(static_cast<char>(t.shape.size()));
    for (int e : t.shape) put_u32(f, static_cast<std::uint32_t>(e));
    for (float v : *t.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(f, bits);
    }
}

Tensor read_tensor_body(std::istream& f, const std::string& path) {
    char magic[6];
    if (!f.read(magic, 6) || std::memcmp(magic, kTensorMagic, 6) != 0)
        throw IoError(path + ": bad tensor magic");
    const int rank = f.get();
    if (rank < 0 || rank > 8) throw IoError(path + ": bad tensor rank");
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (int& e : shape) {
        e = static_cast<int>(get_u32(f, path));
        if (e <= 0) throw IoError(path + ": bad tensor extent");
    }
    Tensor t(shape);
    for (float& v : *t.data) {
        const std::uint32_t bits = get_u32(f, path);
        std::memcpy(&v, &bits, 4);
    }
    return t;
}

} // namespace

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    write_tensor_body(f, t);
    if (!f) throw IoError("write failed for " + path);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    return read_tensor_body(f, path);
}

std::uint64_t config_hash(const std::string& canonical_text) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : canonical_text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

void save_checkpoint(const std::string& path, std::uint64_t cfg_hash,
                     const std::vector<const Tensor*>& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(kCkptMagic, 6);
    put_u64(f, cfg_hash);
    put_u32(f, static_cast<std::uint32_t>(params.size()));
    for (const Tensor* p : params) write_tensor_body(f, *p);
    if (!f) throw IoError("write failed for " + path);
}

std::uint64_t read_checkpoint_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    char magic[6];
    if (!f.read(magic, 6) || std::memcmp(magic, kCkptMagic, 6) != 0)
        throw IoError(path + ": bad checkpoint magic");
    return get_u64(f, path);
}

void load_checkpoint(const std::string& path, std::uint64_t cfg_hash,
                     const std::vector<Tensor*>& params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    char magic[6];
    if (!f.read(magic, 6) || std::memcmp(magic, kCkptMagic, 6) != 0)
        throw IoError(path + ": bad checkpoint magic");
    const std::uint64_t h = get_u64(f, path);
    if (h != cfg_hash)
        throw EvalError(path + ": checkpoint was trained under a different configuration");
    const std::uint32_t n = get_u32(f, path);
    if (n != params.size())
        throw IoError(path + ": parameter count mismatch (" + std::to_string(n) + " vs " +
                      std::to_string(params.size()) + ")");
    for (Tensor* p : params) {
        Tensor t = read_tensor_body(f, path);
        if (t.shape != p->shape) throw IoError(path + ": parameter shape mismatch");
        *p->data = *t.data;
    }
}

} // namespace dcap
