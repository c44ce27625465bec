#pragma once

// Shared layout of GAGM/GAGA files:
//   magic[4] | version u32 | header_len u32 | JSON header | blobs...
// The header lists every blob as {name, dtype, count} in file order.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace gaga::detail {

class ContainerWriter {
public:
    ContainerWriter(std::string magic, std::uint32_t version);

    nlohmann::json& meta() { return meta_; }
    void add_f32(const std::string& name, std::span<const double> values);
    void add_f64(const std::string& name, std::span<const double> values);
    [[nodiscard]] std::vector<std::uint8_t> finish() const;

private:
    std::string magic_;
    std::uint32_t version_;
    nlohmann::json meta_ = nlohmann::json::object();
    nlohmann::json sections_ = nlohmann::json::array();
    std::vector<std::uint8_t> blobs_;
};

class ContainerReader {
public:
    /// Validates magic, version and header; `kind` names the file type in errors.
    ContainerReader(std::span<const std::uint8_t> bytes, const std::string& magic, std::uint32_t version,
                    const std::string& kind);

    [[nodiscard]] const nlohmann::json& meta() const { return meta_; }

    /// Reads the next section, which must be called `name` and hold `expected`
    /// values. Throws FormatError naming the section on any mismatch.
    [[nodiscard]] std::vector<double> read(const std::string& name, std::size_t expected);

    /// Rejects trailing bytes or unread sections.
    void finish() const;

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t offset_ = 0;
    nlohmann::json meta_;
    nlohmann::json sections_;
    std::size_t next_section_ = 0;
};

[[nodiscard]] std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

[[nodiscard]] std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed = 1469598103934665603ULL);
[[nodiscard]] std::uint64_t fnv1a_doubles(std::span<const double> values, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace gaga::detail
