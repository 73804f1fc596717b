// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace duosplat {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'U', 'O', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream &o, T v) {
    o.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T>
T get(std::istream &in, const std::filesystem::path &path) {
    T v{};
    if (!in.read(reinterpret_cast<char *>(&v), sizeof(T))) {
        throw IoError(path.string() + ": truncated checkpoint");
    }
    return v;
}

std::string get_bytes(std::istream &in, std::size_t n, const std::filesystem::path &path) {
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
        throw IoError(path.string() + ": truncated checkpoint");
    }
    return s;
}

} // namespace

void Checkpoint::store(const nn::ParameterSet &params) {
    tensors.clear();
    for (const nn::Parameter *p : params.all()) {
        tensors.emplace_back(p->name, p->value);
    }
}

void Checkpoint::restore(nn::ParameterSet &params) const {
    if (tensors.size() != params.size()) {
        throw FingerprintMismatch("checkpoint holds " + std::to_string(tensors.size()) + " tensors, network expects " +
                                  std::to_string(params.size()));
    }
    std::map<std::string, const nn::Tensor *> by_name;
    for (const auto &[name, t] : tensors) {
        by_name[name] = &t;
    }
    for (nn::Parameter *p : params.all()) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) {
            throw FingerprintMismatch("checkpoint lacks parameter '" + p->name + "'");
        }
        if (it->second->rows() != p->value.rows() || it->second->cols() != p->value.cols()) {
            throw FingerprintMismatch("checkpoint parameter '" + p->name + "' has a different shape");
        }
        p->value = *it->second;
    }
}

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
    std::ofstream o(path, std::ios::binary);
    if (!o) {
        throw IoError("cannot write " + path.string());
    }
    o.write(kMagic, sizeof kMagic);
    put<std::uint8_t>(o, Checkpoint::kVersion);
    put<std::uint8_t>(o, static_cast<std::uint8_t>(ckpt.kind));
    const std::string cfg = ckpt.config.dump();
    put<std::uint32_t>(o, static_cast<std::uint32_t>(cfg.size()));
    o.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    put<std::uint64_t>(o, ckpt.fingerprint);
    put<double>(o, ckpt.delta);
    put<std::uint32_t>(o, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto &[name, t] : ckpt.tensors) {
        put<std::uint16_t>(o, static_cast<std::uint16_t>(name.size()));
        o.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(o, static_cast<std::uint32_t>(t.rows()));
        put<std::uint32_t>(o, static_cast<std::uint32_t>(t.cols()));
        o.write(reinterpret_cast<const char *>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    put<std::uint32_t>(o, static_cast<std::uint32_t>(ckpt.loss_history.size()));
    o.write(reinterpret_cast<const char *>(ckpt.loss_history.data()),
            static_cast<std::streamsize>(ckpt.loss_history.size() * sizeof(double)));
    if (!o) {
        throw IoError("failed writing " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    if (get_bytes(in, sizeof kMagic, path) != std::string(kMagic, sizeof kMagic)) {
        throw IoError(path.string() + ": not a checkpoint file");
    }
    const auto version = get<std::uint8_t>(in, path);
    if (version != Checkpoint::kVersion) {
        throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    const auto kind = get<std::uint8_t>(in, path);
    if (kind != 1 && kind != 2) {
        throw IoError(path.string() + ": unknown checkpoint kind");
    }
    c.kind = static_cast<CheckpointKind>(kind);
    const auto cfg_len = get<std::uint32_t>(in, path);
    try {
        c.config = nlohmann::json::parse(get_bytes(in, cfg_len, path));
    } catch (const nlohmann::json::exception &e) {
        throw IoError(path.string() + ": corrupt config block");
    }
    c.fingerprint = get<std::uint64_t>(in, path);
    c.delta = get<double>(in, path);
    const auto count = get<std::uint32_t>(in, path);
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = get<std::uint16_t>(in, path);
        std::string name = get_bytes(in, len, path);
        const auto rows = get<std::uint32_t>(in, path);
        const auto cols = get<std::uint32_t>(in, path);
        nn::Tensor t(rows, cols);
        if (t.size() > 0 &&
            !in.read(reinterpret_cast<char *>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
            throw IoError(path.string() + ": truncated tensor '" + name + "'");
        }
        c.tensors.emplace_back(std::move(name), std::move(t));
    }
    const auto hist = get<std::uint32_t>(in, path);
    c.loss_history.resize(hist);
    if (hist > 0 && !in.read(reinterpret_cast<char *>(c.loss_history.data()),
                             static_cast<std::streamsize>(hist * sizeof(double)))) {
        throw IoError(path.string() + ": truncated loss history");
    }
    return c;
}

} // namespace duosplat
