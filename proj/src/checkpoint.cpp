#include "dctm/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace dctm {

namespace {

constexpr std::array<char, 5> kMagic{'D', 'C', 'T', 'M', '1'};
// Guards against allocating absurd buffers from a corrupt header.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& is, const std::filesystem::path& path) {
    std::array<unsigned char, 8> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 8)) {
        throw DataError("checkpoint " + path.string() + ": truncated file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[static_cast<std::size_t>(i)]} << (8 * i);
    return v;
}

void put_f32(std::ostream& os, float f) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    os.write(b.data(), 4);
}

} // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path.string());
    os.write(kMagic.data(), kMagic.size());
    put_u64(os, records.size());
    for (const auto& rec : records) {
        put_u64(os, rec.name.size());
        os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
        put_u64(os, rec.dims.size());
        std::uint64_t count = 1;
        for (auto d : rec.dims) {
            put_u64(os, d);
            count *= d;
        }
        if (count != rec.values.size()) {
            throw DimensionError("checkpoint record '" + rec.name + "' payload does not match its dims");
        }
        for (float f : rec.values) put_f32(os, f);
    }
    if (!os) throw DataError("failed writing checkpoint: " + path.string());
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path.string());
    std::array<char, 5> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
        throw DataError("checkpoint " + path.string() + ": bad magic (expected DCTM1)");
    }
    const std::uint64_t n = get_u64(is, path);
    std::vector<CheckpointRecord> records;
    for (std::uint64_t r = 0; r < n; ++r) {
        CheckpointRecord rec;
        const std::uint64_t name_len = get_u64(is, path);
        if (name_len > 4096) throw DataError("checkpoint " + path.string() + ": implausible name length");
        rec.name.resize(name_len);
        if (!is.read(rec.name.data(), static_cast<std::streamsize>(name_len))) {
            throw DataError("checkpoint " + path.string() + ": truncated name");
        }
        const std::uint64_t rank = get_u64(is, path);
        if (rank > 16) throw DataError("checkpoint record '" + rec.name + "': implausible rank");
        std::uint64_t count = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            rec.dims.push_back(get_u64(is, path));
            count *= rec.dims.back();
            if (count > kMaxElements) throw DataError("checkpoint record '" + rec.name + "': too large");
        }
        std::vector<unsigned char> raw(count * 4);
        if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
            throw DataError("checkpoint record '" + rec.name + "': truncated payload");
        }
        rec.values.resize(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            std::uint32_t bits = 0;
            for (int k = 0; k < 4; ++k) bits |= std::uint32_t{raw[i * 4 + static_cast<std::uint64_t>(k)]} << (8 * k);
            rec.values[i] = std::bit_cast<float>(bits);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

template <typename T>
std::vector<CheckpointRecord> snapshot_parameters(const std::vector<Tensor<T>>& params) {
    std::vector<CheckpointRecord> records;
    records.reserve(params.size());
    for (const auto& p : params) {
        CheckpointRecord rec;
        rec.name = p.name();
        rec.dims.assign(p.shape().begin(), p.shape().end());
        rec.values.reserve(p.numel());
        for (T v : p.data()) rec.values.push_back(static_cast<float>(v));
        records.push_back(std::move(rec));
    }
    return records;
}

template <typename T>
void restore_parameters(const std::vector<CheckpointRecord>& records, std::vector<Tensor<T>>& params) {
    std::unordered_map<std::string, const CheckpointRecord*> by_name;
    for (const auto& rec : records) by_name[rec.name] = &rec;
    for (auto& p : params) {
        auto it = by_name.find(p.name());
        if (it == by_name.end()) {
            throw DimensionError("checkpoint is missing tensor '" + p.name() + "'");
        }
        const auto& rec = *it->second;
        Shape dims(rec.dims.begin(), rec.dims.end());
        if (dims != p.shape()) {
            throw DimensionError("checkpoint tensor '" + p.name() + "' has shape " + shape_str(dims) +
                                 ", model expects " + shape_str(p.shape()));
        }
    }
    if (by_name.size() != params.size()) {
        for (const auto& rec : records) {
            bool known = false;
            for (const auto& p : params) known = known || p.name() == rec.name;
            if (!known) throw DimensionError("checkpoint tensor '" + rec.name + "' has no model counterpart");
        }
    }
    for (auto& p : params) {
        const auto& rec = *by_name.at(p.name());
        auto dst = p.mutable_data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(rec.values[i]);
    }
}

template std::vector<CheckpointRecord> snapshot_parameters<float>(const std::vector<Tensor<float>>&);
template std::vector<CheckpointRecord> snapshot_parameters<double>(const std::vector<Tensor<double>>&);
template void restore_parameters<float>(const std::vector<CheckpointRecord>&, std::vector<Tensor<float>>&);
template void restore_parameters<double>(const std::vector<CheckpointRecord>&, std::vector<Tensor<double>>&);

} // namespace dctm
