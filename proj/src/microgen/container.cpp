#include "gpd/microgen/container.hpp"

#include <bit>
#include <fstream>

#include "gpd/errors.hpp"

namespace gpd::microgen {

static_assert(std::endian::native == std::endian::little, "payloads are stored in host order");

namespace {
constexpr char kMagic[4] = {'G', 'P', 'D', 'C'};
constexpr std::size_t kHeader = 4 + 1 + 8;
}  // namespace

const char* to_string(DType d) {
    switch (d) {
        case DType::u8: return "u8";
        case DType::f32: return "f32";
        case DType::f64: return "f64";
    }
    return "u8";
}

DType dtype_from_string(const std::string& s) {
    if (s == "u8") return DType::u8;
    if (s == "f32") return DType::f32;
    if (s == "f64") return DType::f64;
    throw FormatError("unknown dtype '" + s + "'");
}

std::size_t dtype_size(DType d) {
    switch (d) {
        case DType::u8: return 1;
        case DType::f32: return 4;
        case DType::f64: return 8;
    }
    return 1;
}

std::uint64_t NamedArray::element_count() const {
    std::uint64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

bool DatasetContainer::contains(const std::string& name) const {
    for (const auto& a : arrays_)
        if (a.name == name) return true;
    return false;
}

const NamedArray& DatasetContainer::at(const std::string& name) const {
    for (const auto& a : arrays_)
        if (a.name == name) return a;
    throw FormatError("container has no array '" + name + "'");
}

void DatasetContainer::put(NamedArray array) {
    if (array.name.empty()) throw ArgumentError("container array name must be non-empty");
    if (contains(array.name)) throw ArgumentError("duplicate container array '" + array.name + "'");
    if (array.element_count() * dtype_size(array.dtype) != array.bytes.size()) {
        throw ArgumentError("array '" + array.name + "': shape does not match payload size");
    }
    arrays_.push_back(std::move(array));
}

void DatasetContainer::check_dtype(const NamedArray& a, DType want) {
    if (a.dtype != want) {
        throw FormatError("array '" + a.name + "' has dtype " + to_string(a.dtype) + ", expected " + to_string(want));
    }
}

std::vector<std::uint8_t> serialize(const DatasetContainer& c) {
    nlohmann::json manifest;
    manifest["meta"] = c.meta;
    manifest["arrays"] = nlohmann::json::array();
    std::size_t payload = 0;
    for (const auto& a : c.arrays()) {
        manifest["arrays"].push_back({{"name", a.name}, {"dtype", to_string(a.dtype)}, {"shape", a.shape}});
        payload += a.bytes.size();
    }
    const std::string text = manifest.dump();
    std::vector<std::uint8_t> out;
    out.reserve(kHeader + text.size() + payload);
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kContainerVersion);
    const std::uint64_t len = text.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& a : c.arrays()) out.insert(out.end(), a.bytes.begin(), a.bytes.end());
    return out;
}

DatasetContainer deserialize(std::span<const std::uint8_t> data, const std::string& source) {
    if (data.size() < kHeader || std::memcmp(data.data(), kMagic, 4) != 0) {
        throw FormatError(source + ": bad magic, not a GPDC container");
    }
    if (data[4] != kContainerVersion) {
        throw FormatError(source + ": unsupported container version " + std::to_string(data[4]));
    }
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(data[5 + i]) << (8 * i);
    if (len > data.size() - kHeader) throw FormatError(source + ": truncated manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(data.begin() + kHeader, data.begin() + kHeader + static_cast<std::ptrdiff_t>(len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(source + ": invalid manifest JSON (" + e.what() + ")");
    }
    if (!manifest.is_object() || !manifest.contains("arrays") || !manifest["arrays"].is_array()) {
        throw FormatError(source + ": manifest lacks an array list");
    }

    DatasetContainer c;
    if (manifest.contains("meta")) c.meta = manifest["meta"];
    std::size_t offset = kHeader + len;
    for (const auto& entry : manifest["arrays"]) {
        NamedArray a;
        try {
            a.name = entry.at("name").get<std::string>();
            a.dtype = dtype_from_string(entry.at("dtype").get<std::string>());
            a.shape = entry.at("shape").get<std::vector<std::uint64_t>>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(source + ": malformed array entry (" + e.what() + ")");
        }
        const std::uint64_t nbytes = a.element_count() * dtype_size(a.dtype);
        if (nbytes > data.size() - offset) {
            throw FormatError(source + ": truncated payload for array '" + a.name + "'");
        }
        a.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(offset),
                       data.begin() + static_cast<std::ptrdiff_t>(offset + nbytes));
        offset += nbytes;
        if (c.contains(a.name)) throw FormatError(source + ": duplicate array '" + a.name + "'");
        c.put(std::move(a));
    }
    if (offset != data.size()) {
        throw FormatError(source + ": " + std::to_string(data.size() - offset) + " trailing bytes after payloads");
    }
    return c;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string() + ": cannot open for reading");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError(path.string() + ": cannot open for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError(path.string() + ": write failed");
    }
    std::filesystem::rename(tmp, path);
}

void write_dataset(const DatasetContainer& c, const std::filesystem::path& path) {
    write_file_bytes(path, serialize(c));
}

DatasetContainer read_dataset(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return deserialize(bytes, path.string());
}

}  // namespace gpd::microgen
