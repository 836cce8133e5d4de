#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

namespace gpd::microgen {

enum class DType { u8, f32, f64 };

const char* to_string(DType d);
DType dtype_from_string(const std::string& s);
std::size_t dtype_size(DType d);

template <class T>
constexpr DType dtype_of() {
    if constexpr (std::is_same_v<T, std::uint8_t>) return DType::u8;
    else if constexpr (std::is_same_v<T, float>) return DType::f32;
    else {
        static_assert(std::is_same_v<T, double>, "unsupported container dtype");
        return DType::f64;
    }
}

struct NamedArray {
    std::string name;
    DType dtype = DType::u8;
    std::vector<std::uint64_t> shape;
    std::vector<std::uint8_t> bytes;  // little-endian payload

    std::uint64_t element_count() const;

    bool operator==(const NamedArray&) const = default;
};

/// Named typed arrays plus a free-form JSON manifest section (`meta`).
/// Serialized as "GPDC", a version byte, a uint64 LE manifest length, the
/// UTF-8 JSON manifest, then the payloads in manifest order.
class DatasetContainer {
public:
    nlohmann::json meta = nlohmann::json::object();

    const std::vector<NamedArray>& arrays() const { return arrays_; }
    bool contains(const std::string& name) const;
    const NamedArray& at(const std::string& name) const;

    /// Throws ArgumentError on a duplicate name or a shape/size mismatch.
    void put(NamedArray array);

    template <class T>
    void put(const std::string& name, std::vector<std::uint64_t> shape, std::span<const T> values) {
        NamedArray a{name, dtype_of<T>(), std::move(shape), {}};
        a.bytes.resize(values.size() * sizeof(T));
        if (!values.empty()) std::memcpy(a.bytes.data(), values.data(), a.bytes.size());
        put(std::move(a));
    }

    template <class T>
    void put(const std::string& name, std::vector<std::uint64_t> shape, const std::vector<T>& values) {
        put<T>(name, std::move(shape), std::span<const T>(values));
    }

    /// Copies the payload out; FormatError if the dtype differs.
    template <class T>
    std::vector<T> get(const std::string& name) const {
        const NamedArray& a = at(name);
        check_dtype(a, dtype_of<T>());
        std::vector<T> out(a.bytes.size() / sizeof(T));
        if (!out.empty()) std::memcpy(out.data(), a.bytes.data(), a.bytes.size());
        return out;
    }

    bool operator==(const DatasetContainer&) const = default;

private:
    static void check_dtype(const NamedArray& a, DType want);
    std::vector<NamedArray> arrays_;
};

inline constexpr std::uint8_t kContainerVersion = 1;

std::vector<std::uint8_t> serialize(const DatasetContainer& c);
/// `source` names the origin in error messages.
DatasetContainer deserialize(std::span<const std::uint8_t> data, const std::string& source = "<memory>");

void write_dataset(const DatasetContainer& c, const std::filesystem::path& path);
DatasetContainer read_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace gpd::microgen
