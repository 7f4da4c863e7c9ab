#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

namespace egghand::checkpoint {

inline constexpr char kMagic[4] = {'E', 'G', 'G', 'H'};
inline constexpr std::uint32_t kVersion = 1;

/// Little-endian container:
///   "EGGH" | u32 version | u32 header bytes | UTF-8 JSON header
///   | u64 n | n x binary32 payload | u64 m | m x binary64 trailer
/// The payload holds parameters at rest; the trailer holds values that must
/// survive exactly (normalization statistics).
struct Container {
    nlohmann::json header = nlohmann::json::object();
    std::vector<double> payload;
    std::vector<double> trailer;
};

void write_container(const Container& c, const std::filesystem::path& path);

/// Errors: BadMagic, BadVersion, Truncated (file shorter than declared),
/// Integrity (trailing bytes or malformed header).
Container read_container(const std::filesystem::path& path);

/// Round a value through binary32, as stored at rest.
inline double at_rest(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace egghand::checkpoint
