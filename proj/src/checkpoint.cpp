#include "langadv/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace langadv {

namespace {

constexpr char kMagic[8] = {'L', 'A', 'D', 'V', 'C', 'K', 'P', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

int to_int(std::uint64_t v, const char* what) {
    if (v > 1u << 30) throw std::runtime_error(std::string("checkpoint: implausible ") + what);
    return static_cast<int>(v);
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [entry_name, tensor] : entries)
        if (entry_name == name) return &tensor;
    return nullptr;
}

void save_checkpoint(const std::string& path, const EncoderConfig& config,
                     const std::vector<const Parameter*>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);

    out.write(kMagic, 8);
    put_u64(out, static_cast<std::uint64_t>(config.vocab_size));
    put_u64(out, static_cast<std::uint64_t>(config.hidden));
    put_u64(out, static_cast<std::uint64_t>(config.layers));
    put_u64(out, static_cast<std::uint64_t>(config.heads));
    put_u64(out, static_cast<std::uint64_t>(config.resolved_ffn_width()));
    put_u64(out, static_cast<std::uint64_t>(config.max_len));
    put_u64(out, config.seed);

    put_u64(out, params.size());
    for (const Parameter* p : params) {
        if (p == nullptr) throw std::invalid_argument("checkpoint: null parameter");
        put_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u32(out, static_cast<std::uint32_t>(p->value.rank()));
        for (int extent : p->value.shape) put_u64(out, static_cast<std::uint64_t>(extent));
        for (double v : p->value.values) put_f64(out, v);
    }
    out.flush();
    if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);

    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);

    Checkpoint ckpt;
    ckpt.config.vocab_size = to_int(get_u64(in), "vocab_size");
    ckpt.config.hidden = to_int(get_u64(in), "hidden");
    ckpt.config.layers = to_int(get_u64(in), "layers");
    ckpt.config.heads = to_int(get_u64(in), "heads");
    ckpt.config.ffn_width = to_int(get_u64(in), "ffn_width");
    ckpt.config.max_len = to_int(get_u64(in), "max_len");
    ckpt.config.seed = get_u64(in);

    std::uint64_t count = get_u64(in);
    if (count > 1u << 20) throw std::runtime_error("checkpoint: implausible parameter count");
    ckpt.entries.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t name_len = get_u32(in);
        if (name_len > 4096) throw std::runtime_error("checkpoint: implausible name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw std::runtime_error("checkpoint: truncated file");

        std::uint32_t rank = get_u32(in);
        if (rank > 8) throw std::runtime_error("checkpoint: implausible rank");
        Shape shape(rank);
        for (std::uint32_t a = 0; a < rank; ++a) shape[a] = to_int(get_u64(in), "extent");

        Tensor t(shape);
        for (double& v : t.values) v = get_f64(in);
        ckpt.entries.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params) {
    for (Parameter* p : params) {
        if (p == nullptr) throw std::invalid_argument("checkpoint: null parameter");
        const Tensor* t = ckpt.find(p->name);
        if (t == nullptr)
            throw std::runtime_error("checkpoint: missing parameter " + p->name);
        if (!(t->shape == p->value.shape))
            throw std::runtime_error("checkpoint: shape mismatch for " + p->name + ": stored " +
                                     shape_str(t->shape) + " vs expected " +
                                     shape_str(p->value.shape));
        p->value = *t;
        p->zero_grad();
    }
}

}  // namespace langadv
