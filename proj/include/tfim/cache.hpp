#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace tfim {

// Bumped whenever a sampling or diagonalization algorithm changes in a way
// that alters results; it is part of every cache key.
inline constexpr const char* kEngineVersion = "tfim-engine-1";
inline constexpr const char* kToolVersion = "0.1.0";

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// Write via a temporary sibling and rename into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

struct CacheEntryStatus {
    std::string name;
    bool ok = false;
    std::string detail;
};

// Flat directory of content-addressed results with an index.json recording
// the SHA-256 of every entry. Safe for concurrent use within one process.
class CacheDir {
public:
    explicit CacheDir(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }

    std::optional<std::string> load(const std::string& name) const;
    void store(const std::string& name, const std::string& bytes);

    std::vector<std::string> list() const;
    std::vector<CacheEntryStatus> verify() const;
    // Removes every entry and the index; returns the number of entries removed.
    std::size_t purge();

private:
    std::filesystem::path root_;
    mutable std::mutex mutex_;
};

} // namespace tfim
