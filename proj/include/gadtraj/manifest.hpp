#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace gadtraj {

/// Lowercase hex SHA-256 of a byte string.
inline std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    std::string hex;
    hex.reserve(2 * len);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

/**
 * Writes manifest.json into `root`: the command, its resolved config and seed,
 * and a SHA-256 per artifact, paths relative to `root` and sorted.
 */
inline std::filesystem::path write_manifest(const std::filesystem::path& root, const std::string& command,
                                            const nlohmann::json& config, std::uint64_t seed,
                                            std::vector<std::filesystem::path> artifacts) {
    std::vector<std::string> rel;
    for (const auto& a : artifacts) rel.push_back(std::filesystem::relative(a, root).generic_string());
    std::sort(rel.begin(), rel.end());
    rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : rel) list.push_back({{"path", r}, {"sha256", sha256_file(root / r)}});
    nlohmann::json m{{"command", command}, {"seed", seed}, {"config", config}, {"artifacts", std::move(list)}};
    auto path = root / "manifest.json";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << m.dump(2) << '\n';
    return path;
}

} // namespace gadtraj
