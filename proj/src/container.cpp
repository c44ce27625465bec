#include "container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gaga/errors.hpp"

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace gaga::detail {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t b[4];
    std::memcpy(b, &v, 4);
    out.insert(out.end(), b, b + 4);
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + offset, 4);
    return v;
}

std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "f32") return 4;
    if (dtype == "f64") return 8;
    return 0;
}

}  // namespace

ContainerWriter::ContainerWriter(std::string magic, std::uint32_t version)
    : magic_(std::move(magic)), version_(version) {}

void ContainerWriter::add_f32(const std::string& name, std::span<const double> values) {
    sections_.push_back({{"name", name}, {"dtype", "f32"}, {"count", values.size()}});
    const std::size_t start = blobs_.size();
    blobs_.resize(start + values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float f = static_cast<float>(values[i]);
        std::memcpy(blobs_.data() + start + i * 4, &f, 4);
    }
}

void ContainerWriter::add_f64(const std::string& name, std::span<const double> values) {
    sections_.push_back({{"name", name}, {"dtype", "f64"}, {"count", values.size()}});
    const std::size_t start = blobs_.size();
    blobs_.resize(start + values.size() * 8);
    if (!values.empty()) std::memcpy(blobs_.data() + start, values.data(), values.size() * 8);
}

std::vector<std::uint8_t> ContainerWriter::finish() const {
    nlohmann::json header = {{"meta", meta_}, {"sections", sections_}};
    const std::string text = header.dump();
    std::vector<std::uint8_t> out;
    out.reserve(12 + text.size() + blobs_.size());
    out.insert(out.end(), magic_.begin(), magic_.end());
    put_u32(out, version_);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), blobs_.begin(), blobs_.end());
    return out;
}

ContainerReader::ContainerReader(std::span<const std::uint8_t> bytes, const std::string& magic,
                                 std::uint32_t version, const std::string& kind)
    : bytes_(bytes) {
    if (bytes.size() < 12) throw FormatError("header", kind + " file too short (" + std::to_string(bytes.size()) + " bytes)");
    if (std::memcmp(bytes.data(), magic.data(), 4) != 0)
        throw FormatError("magic", "not a " + kind + " file (expected magic '" + magic + "')");
    const std::uint32_t file_version = get_u32(bytes, 4);
    if (file_version != version)
        throw FormatError("version", "unsupported " + kind + " file version " + std::to_string(file_version) +
                                         " (this build reads version " + std::to_string(version) +
                                         "); regenerate the file with a matching gaga build");
    const std::uint32_t header_len = get_u32(bytes, 8);
    if (12 + static_cast<std::size_t>(header_len) > bytes.size())
        throw FormatError("header", "truncated JSON header");
    try {
        const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
        meta_ = header.at("meta");
        sections_ = header.at("sections");
        if (!sections_.is_array()) throw FormatError("header", "'sections' is not an array");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("header", std::string("invalid JSON header: ") + e.what());
    }
    offset_ = 12 + header_len;
}

std::vector<double> ContainerReader::read(const std::string& name, std::size_t expected) {
    if (next_section_ >= sections_.size()) throw FormatError(name, "section missing from header");
    const auto& sec = sections_[next_section_];
    std::string declared_name, dtype;
    std::size_t count = 0;
    try {
        declared_name = sec.at("name").get<std::string>();
        dtype = sec.at("dtype").get<std::string>();
        count = sec.at("count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(name, std::string("malformed section entry: ") + e.what());
    }
    if (declared_name != name)
        throw FormatError(name, "expected section '" + name + "', header declares '" + declared_name + "'");
    const std::size_t width = dtype_size(dtype);
    if (width == 0) throw FormatError(name, "unknown dtype '" + dtype + "'");
    if (count != expected)
        throw FormatError(name, "length mismatch: header declares " + std::to_string(count) + " values, dimensions require " +
                                    std::to_string(expected));
    const std::size_t need = count * width;
    const std::size_t have = bytes_.size() - offset_;
    if (have < need)
        throw FormatError(name, "truncated: needs " + std::to_string(need) + " bytes, file has " + std::to_string(have));
    std::vector<double> values(count);
    const std::uint8_t* src = bytes_.data() + offset_;
    if (width == 4) {
        for (std::size_t i = 0; i < count; ++i) {
            float f;
            std::memcpy(&f, src + i * 4, 4);
            values[i] = f;
        }
    } else if (count > 0) {
        std::memcpy(values.data(), src, need);
    }
    offset_ += need;
    ++next_section_;
    return values;
}

void ContainerReader::finish() const {
    if (next_section_ != sections_.size())
        throw FormatError("sections", "header declares " + std::to_string(sections_.size()) + " sections, expected " +
                                          std::to_string(next_section_));
    if (offset_ != bytes_.size())
        throw FormatError("trailer", std::to_string(bytes_.size() - offset_) + " unexpected trailing bytes");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (const std::uint8_t b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t fnv1a_doubles(std::span<const double> values, std::uint64_t seed) {
    return fnv1a({reinterpret_cast<const std::uint8_t*>(values.data()), values.size() * sizeof(double)}, seed);
}

}  // namespace gaga::detail
