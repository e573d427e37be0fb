#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "isgcd/errors.hpp"
#include "isgcd/iediff.hpp"
#include "isgcd/model.hpp"

namespace isgcd {

// Checkpoint layout: magic, format version, dims (M, N, T, Z, L), flag bits,
// then every parameter block in declared order as little-endian 64-bit floats.
inline constexpr char kCheckpointMagic[8] = {'I', 'S', 'G', 'C', 'D', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw checkpoint_error("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline void write_f64(std::ostream& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw checkpoint_error("checkpoint truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

} // namespace detail

struct CheckpointFlags {
    bool bias_on = false;
    bool sgnn_on = true;
    bool iediff_on = true;
};

struct Checkpoint {
    std::int32_t num_students = 0;
    std::int32_t num_exercises = 0;
    std::int32_t num_concepts = 0;
    int dim = 0;
    int layers = 0;
    CheckpointFlags flags;
    ModelParams theta;
    EdgeMaskParams phi;
};

inline void save_checkpoint(const ModelParams& theta, const EdgeMaskParams& phi, int layers,
                            const CheckpointFlags& flags, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw checkpoint_error("cannot open checkpoint for writing: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_u32(out, kCheckpointVersion);
    detail::write_u32(out, static_cast<std::uint32_t>(theta.num_students));
    detail::write_u32(out, static_cast<std::uint32_t>(theta.num_exercises));
    detail::write_u32(out, static_cast<std::uint32_t>(theta.num_concepts));
    detail::write_u32(out, static_cast<std::uint32_t>(theta.dim));
    detail::write_u32(out, static_cast<std::uint32_t>(layers));
    std::uint32_t bits = 0;
    if (flags.bias_on) bits |= 1u;
    if (flags.sgnn_on) bits |= 2u;
    if (flags.iediff_on) bits |= 4u;
    detail::write_u32(out, bits);
    for (const auto& t : theta.all())
        for (const double v : t->value) detail::write_f64(out, v);
    for (const auto& t : phi.all())
        for (const double v : t->value) detail::write_f64(out, v);
    if (!out) throw checkpoint_error("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw checkpoint_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw checkpoint_error("bad checkpoint magic: " + path);
    const std::uint32_t version = detail::read_u32(in);
    if (version != kCheckpointVersion)
        throw checkpoint_error("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    ck.num_students = static_cast<std::int32_t>(detail::read_u32(in));
    ck.num_exercises = static_cast<std::int32_t>(detail::read_u32(in));
    ck.num_concepts = static_cast<std::int32_t>(detail::read_u32(in));
    ck.dim = static_cast<int>(detail::read_u32(in));
    ck.layers = static_cast<int>(detail::read_u32(in));
    const std::uint32_t bits = detail::read_u32(in);
    ck.flags.bias_on = bits & 1u;
    ck.flags.sgnn_on = bits & 2u;
    ck.flags.iediff_on = bits & 4u;

    Rng dummy(0);
    ck.theta = ModelParams(ck.num_students, ck.num_exercises, ck.num_concepts, ck.dim, ck.flags.bias_on, dummy);
    ck.phi = EdgeMaskParams(ck.dim, dummy);
    for (const auto& t : ck.theta.all())
        for (auto& v : t->value) v = detail::read_f64(in);
    for (const auto& t : ck.phi.all())
        for (auto& v : t->value) v = detail::read_f64(in);
    char extra;
    if (in.read(&extra, 1))
        throw checkpoint_error("trailing bytes after parameter blocks: " + path);
    return ck;
}

// Startup guard for loading a checkpoint into an existing dataset/config.
inline void check_checkpoint_dims(const Checkpoint& ck, std::int32_t num_students, std::int32_t num_exercises,
                                  std::int32_t num_concepts, int dim) {
    const auto mismatch = [&](const char* what, long expected, long got) {
        throw checkpoint_error(std::string("checkpoint dimension mismatch on ") + what + ": expected " +
                               std::to_string(expected) + ", file has " + std::to_string(got));
    };
    if (ck.num_students != num_students) mismatch("students", num_students, ck.num_students);
    if (ck.num_exercises != num_exercises) mismatch("exercises", num_exercises, ck.num_exercises);
    if (ck.num_concepts != num_concepts) mismatch("concepts", num_concepts, ck.num_concepts);
    if (ck.dim != dim) mismatch("embedding dim", dim, ck.dim);
}

} // namespace isgcd
