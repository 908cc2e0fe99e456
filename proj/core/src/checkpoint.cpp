#include "mambatext/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mambatext/quantize.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as native little-endian");

namespace mambatext {

std::uint32_t crc32_ieee(const void* data, std::size_t len, std::uint32_t seed) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = seed ^ 0xffffffffu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

namespace {

constexpr char kMagic[4] = {'M', 'S', 'S', 'M'};

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<char*>(&v), 4); }
void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<char*>(&v), 8); }
void put_f32(std::string& out, float v) { out.append(reinterpret_cast<char*>(&v), 4); }

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw BadMagic("checkpoint ends mid-record");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    float f32() {
        need(4);
        float v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

struct RawTensor {
    std::string name;
    Dtype dtype;
    std::vector<std::size_t> shape;
    float scale = 1.0f;        // int8 only
    std::string payload;       // raw little-endian bytes
};

void append_tensor(std::string& out, const std::string& name, Dtype dt,
                   const std::vector<std::size_t>& shape, float scale, const void* data,
                   std::size_t bytes) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(dt));
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put_u64(out, static_cast<std::uint64_t>(d));
    if (dt == Dtype::i8) put_f32(out, scale);
    out.append(static_cast<const char*>(data), bytes);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError("read failure on " + path);
    return ss.str();
}

// Verified container body: bytes between the header and the CRC.
std::string open_container(const std::string& path, ModelConfig& cfg, MetaMap& meta,
                           std::vector<RawTensor>& tensors) {
    const std::string all = read_file(path);
    if (all.size() < 12 || std::memcmp(all.data(), kMagic, 4) != 0)
        throw BadMagic(path + " is not a checkpoint (bad magic)");
    const std::uint32_t stored_crc = [&] {
        std::uint32_t v;
        std::memcpy(&v, all.data() + all.size() - 4, 4);
        return v;
    }();
    if (crc32_ieee(all.data(), all.size() - 4) != stored_crc)
        throw ChecksumMismatch(path + ": checksum does not match contents");
    Reader r{all, 4};
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw VersionMismatch(path + ": file version " + std::to_string(version) +
                              ", supported version " + std::to_string(kCheckpointVersion));
    const auto cfg_len = static_cast<std::size_t>(r.u64());
    decode_config_block(r.bytes(cfg_len), cfg, meta);
    const std::uint32_t count = r.u32();
    tensors.clear();
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        RawTensor t;
        t.name = r.bytes(r.u32());
        const std::uint8_t code = r.u8();
        if (code > 2) throw BadMagic(path + ": unknown dtype code");
        t.dtype = static_cast<Dtype>(code);
        const std::uint32_t rank = r.u32();
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            t.shape.push_back(static_cast<std::size_t>(r.u64()));
            numel *= t.shape.back();
        }
        if (t.dtype == Dtype::i8) t.scale = r.f32();
        const std::size_t elem = t.dtype == Dtype::i8 ? 1 : (t.dtype == Dtype::f32 ? 4 : 8);
        t.payload = r.bytes(numel * elem);
        tensors.push_back(std::move(t));
    }
    if (r.pos != all.size() - 4) throw BadMagic(path + ": trailing bytes after tensor table");
    return all;
}

std::string container_bytes(const ModelConfig& cfg, const MetaMap& meta,
                            const std::vector<RawTensor>& tensors) {
    std::string out(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    const std::string cfg_block = encode_config_block(cfg, meta);
    put_u64(out, cfg_block.size());
    out.append(cfg_block);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors)
        append_tensor(out, t.name, t.dtype, t.shape, t.scale, t.payload.data(),
                      t.payload.size());
    put_u32(out, crc32_ieee(out.data(), out.size()));
    return out;
}

}  // namespace

std::string encode_config_block(const ModelConfig& cfg, const MetaMap& meta) {
    std::ostringstream os;
    os << "d_model=" << cfg.d_model << "\n";
    os << "n_layers=" << cfg.n_layers << "\n";
    os << "d_state=" << cfg.d_state << "\n";
    os << "d_conv=" << cfg.d_conv << "\n";
    os << "expand=" << cfg.expand << "\n";
    os << "dt_rank=" << cfg.dt_rank << "\n";
    os << "vocab_size=" << cfg.vocab_size << "\n";
    os << "n_classes=" << cfg.n_classes << "\n";
    os << "max_seq_len=" << cfg.max_seq_len << "\n";
    os << "pooling=" << to_string(cfg.pooling) << "\n";
    os << "exact_zoh_b=" << (cfg.exact_zoh_b ? 1 : 0) << "\n";
    for (const auto& [k, v] : meta) {
        if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos ||
            k.find('=') != std::string::npos)
            throw IoError("checkpoint meta entries must be single-line and '='-free keys");
        os << "x." << k << "=" << v << "\n";
    }
    return os.str();
}

void decode_config_block(const std::string& text, ModelConfig& cfg, MetaMap& meta) {
    std::istringstream is(text);
    std::string line;
    auto to_int = [](const std::string& v) { return std::stoi(v); };
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw BadMagic("malformed config line in checkpoint");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key.rfind("x.", 0) == 0) {
            meta[key.substr(2)] = val;
        } else if (key == "d_model") {
            cfg.d_model = to_int(val);
        } else if (key == "n_layers") {
            cfg.n_layers = to_int(val);
        } else if (key == "d_state") {
            cfg.d_state = to_int(val);
        } else if (key == "d_conv") {
            cfg.d_conv = to_int(val);
        } else if (key == "expand") {
            cfg.expand = to_int(val);
        } else if (key == "dt_rank") {
            cfg.dt_rank = to_int(val);
        } else if (key == "vocab_size") {
            cfg.vocab_size = to_int(val);
        } else if (key == "n_classes") {
            cfg.n_classes = to_int(val);
        } else if (key == "max_seq_len") {
            cfg.max_seq_len = to_int(val);
        } else if (key == "pooling") {
            cfg.pooling = pooling_from_string(val);
        } else if (key == "exact_zoh_b") {
            cfg.exact_zoh_b = val == "1";
        } else {
            throw BadMagic("unknown config key in checkpoint: " + key);
        }
    }
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out.good()) throw IoError("write failure on " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
}

void save_checkpoint(const MambaClassifier<float>& m, const std::string& path,
                     const MetaMap& meta) {
    std::vector<RawTensor> tensors;
    m.for_each_param([&tensors](const std::string& name, const Tensor<float>& t) {
        RawTensor rt;
        rt.name = name;
        rt.dtype = Dtype::f32;
        rt.shape = t.shape();
        rt.payload.assign(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
        tensors.push_back(std::move(rt));
    });
    atomic_write_file(path, container_bytes(m.cfg, meta, tensors));
}

LoadedModel load_checkpoint(const std::string& path) {
    ModelConfig cfg;
    MetaMap meta;
    std::vector<RawTensor> tensors;
    open_container(path, cfg, meta, tensors);
    LoadedModel out{MambaClassifier<float>::zeros(cfg), std::move(meta), false};
    std::map<std::string, Tensor<float>*> slots;
    out.model.for_each_param(
        [&slots](const std::string& name, Tensor<float>& t) { slots[name] = &t; });
    std::size_t filled = 0;
    for (const auto& rt : tensors) {
        auto it = slots.find(rt.name);
        if (it == slots.end()) throw BadMagic(path + ": unexpected tensor " + rt.name);
        Tensor<float>& dst = *it->second;
        if (dst.shape() != rt.shape)
            throw BadMagic(path + ": tensor " + rt.name + " has inconsistent shape");
        if (rt.dtype == Dtype::f32) {
            std::memcpy(dst.data(), rt.payload.data(), rt.payload.size());
        } else if (rt.dtype == Dtype::i8) {
            out.was_quantized = true;
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] = static_cast<float>(static_cast<std::int8_t>(rt.payload[i])) * rt.scale;
        } else {
            throw BadMagic(path + ": tensor " + rt.name + " has unsupported dtype");
        }
        ++filled;
    }
    if (filled != slots.size()) throw BadMagic(path + ": tensor table is incomplete");
    return out;
}

void save_quantized(const QuantizedModel& qm, const std::string& path, const MetaMap& meta) {
    std::vector<RawTensor> tensors;
    for (const auto& w : qm.weights) {
        RawTensor rt;
        rt.name = w.name;
        rt.dtype = Dtype::i8;
        rt.shape = w.shape;
        rt.scale = w.scale;
        rt.payload.assign(reinterpret_cast<const char*>(w.q.data()), w.q.size());
        tensors.push_back(std::move(rt));
    }
    for (const auto& [name, t] : qm.biases) {
        RawTensor rt;
        rt.name = name;
        rt.dtype = Dtype::f32;
        rt.shape = t.shape();
        rt.payload.assign(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
        tensors.push_back(std::move(rt));
    }
    atomic_write_file(path, container_bytes(qm.cfg, meta, tensors));
}

QuantizedModel load_quantized(const std::string& path, MetaMap* meta_out) {
    ModelConfig cfg;
    MetaMap meta;
    std::vector<RawTensor> tensors;
    open_container(path, cfg, meta, tensors);
    QuantizedModel qm;
    qm.cfg = cfg;
    for (const auto& rt : tensors) {
        if (rt.dtype == Dtype::i8) {
            QuantizedTensor qt;
            qt.name = rt.name;
            qt.shape = rt.shape;
            qt.scale = rt.scale;
            qt.q.resize(rt.payload.size());
            std::memcpy(qt.q.data(), rt.payload.data(), rt.payload.size());
            qm.weights.push_back(std::move(qt));
        } else if (rt.dtype == Dtype::f32) {
            Tensor<float> t(rt.shape);
            std::memcpy(t.data(), rt.payload.data(), rt.payload.size());
            qm.biases.emplace_back(rt.name, std::move(t));
        } else {
            throw BadMagic(path + ": unsupported dtype in quantized checkpoint");
        }
    }
    if (meta_out) *meta_out = std::move(meta);
    return qm;
}

}  // namespace mambatext
