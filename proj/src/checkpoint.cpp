#include "d2f/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace d2f::model {

namespace {

constexpr char kMagic[8] = {'D', '2', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

template <typename T>
void wr(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T rd(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(bool(f), "checkpoint: truncated file");
    return v;
}

void write_header(std::ofstream& f, const ModelConfig& cfg, Role role, bool is_double,
                  uint32_t n_arrays) {
    f.write(kMagic, sizeof(kMagic));
    wr(f, kVersion);
    wr(f, uint8_t(is_double ? 1 : 0));
    wr(f, uint8_t(role == Role::student ? 1 : 0));
    wr(f, int32_t(cfg.vocab_size));
    wr(f, int32_t(cfg.dim));
    wr(f, int32_t(cfg.n_layers));
    wr(f, int32_t(cfg.n_heads));
    wr(f, int32_t(cfg.max_seq_len));
    wr(f, double(cfg.ln_eps));
    wr(f, n_arrays);
}

CheckpointInfo read_header(std::ifstream& f, const std::string& path, uint32_t& n_arrays) {
    char magic[8];
    f.read(magic, sizeof(magic));
    require(bool(f) && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
            "checkpoint: bad magic in " + path);
    const auto ver = rd<uint32_t>(f);
    require(ver == kVersion, "checkpoint: unsupported version in " + path);
    CheckpointInfo info;
    info.is_double = rd<uint8_t>(f) != 0;
    info.role = rd<uint8_t>(f) != 0 ? Role::student : Role::teacher;
    info.cfg.vocab_size = rd<int32_t>(f);
    info.cfg.dim = rd<int32_t>(f);
    info.cfg.n_layers = rd<int32_t>(f);
    info.cfg.n_heads = rd<int32_t>(f);
    info.cfg.max_seq_len = rd<int32_t>(f);
    info.cfg.ln_eps = rd<double>(f);
    n_arrays = rd<uint32_t>(f);
    return info;
}

}  // namespace

const char* role_name(Role r) {
    return r == Role::teacher ? "teacher" : "student";
}

template <typename Real>
void save_checkpoint(const std::string& path, const Net<Real>& net, Role role) {
    std::ofstream f(path, std::ios::binary);
    require(bool(f), "checkpoint: cannot open " + path + " for writing");
    write_header(f, net.cfg, role, sizeof(Real) == 8,
                 static_cast<uint32_t>(net.layout.views.size()));
    for (const auto& v : net.layout.views) {
        const auto nlen = static_cast<uint16_t>(v.name.size());
        wr(f, nlen);
        f.write(v.name.data(), nlen);
        wr(f, int32_t(v.rows));
        wr(f, int32_t(v.cols));
        f.write(reinterpret_cast<const char*>(net.params.data() + v.offset),
                static_cast<std::streamsize>(v.count() * sizeof(Real)));
    }
    require(bool(f), "checkpoint: write failed for " + path);
}

CheckpointInfo peek_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(bool(f), "checkpoint: cannot open " + path);
    uint32_t n_arrays = 0;
    return read_header(f, path, n_arrays);
}

template <typename Real>
Net<Real> load_checkpoint(const std::string& path, Role expect_role,
                          const std::optional<ModelConfig>& expect_cfg) {
    std::ifstream f(path, std::ios::binary);
    require(bool(f), "checkpoint: cannot open " + path);
    uint32_t n_arrays = 0;
    const CheckpointInfo info = read_header(f, path, n_arrays);
    require(info.is_double == (sizeof(Real) == 8),
            "checkpoint: dtype mismatch in " + path + " (stored " +
                (info.is_double ? "f64" : "f32") + ")");
    require(info.role == expect_role, "checkpoint: role mismatch in " + path + " (stored " +
                                          role_name(info.role) + ", need " +
                                          role_name(expect_role) + ")");
    if (expect_cfg) {
        require(info.cfg == *expect_cfg, "checkpoint: model config mismatch in " + path);
    }

    Net<Real> net(info.cfg);
    require(n_arrays == net.layout.views.size(), "checkpoint: array count mismatch in " + path);
    for (const auto& v : net.layout.views) {
        const auto nlen = rd<uint16_t>(f);
        std::string name(nlen, '\0');
        f.read(name.data(), nlen);
        require(bool(f) && name == v.name, "checkpoint: unexpected array '" + name + "' in " + path);
        const auto rows = rd<int32_t>(f);
        const auto cols = rd<int32_t>(f);
        require(rows == v.rows && cols == v.cols,
                "checkpoint: shape mismatch for '" + name + "' in " + path);
        f.read(reinterpret_cast<char*>(net.params.data() + v.offset),
               static_cast<std::streamsize>(v.count() * sizeof(Real)));
        require(bool(f), "checkpoint: truncated array '" + name + "' in " + path);
    }
    return net;
}

template void save_checkpoint<float>(const std::string&, const Net<float>&, Role);
template void save_checkpoint<double>(const std::string&, const Net<double>&, Role);
template Net<float> load_checkpoint<float>(const std::string&, Role,
                                           const std::optional<ModelConfig>&);
template Net<double> load_checkpoint<double>(const std::string&, Role,
                                             const std::optional<ModelConfig>&);

}  // namespace d2f::model
