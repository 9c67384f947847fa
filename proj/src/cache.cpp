#include "tfim/cache.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;

namespace tfim {

namespace {

constexpr const char* kIndexName = "index.json";

nlohmann::json read_index(const fs::path& root) {
    const fs::path path = root / kIndexName;
    if (!fs::exists(path)) return nlohmann::json::object();
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception&) {
        return nlohmann::json::object();
    }
}

} // namespace

std::string sha256_hex(const std::string& bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

CacheDir::CacheDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

std::optional<std::string> CacheDir::load(const std::string& name) const {
    std::lock_guard lock(mutex_);
    const fs::path path = root_ / name;
    if (!fs::exists(path)) return std::nullopt;
    std::string bytes = read_file(path);
    const auto index = read_index(root_);
    // A corrupted entry is a miss; `verify` is where it gets reported.
    if (!index.contains(name) || index[name].get<std::string>() != sha256_hex(bytes))
        return std::nullopt;
    return bytes;
}

void CacheDir::store(const std::string& name, const std::string& bytes) {
    std::lock_guard lock(mutex_);
    write_file_atomic(root_ / name, bytes);
    auto index = read_index(root_);
    index[name] = sha256_hex(bytes);
    write_file_atomic(root_ / kIndexName, index.dump(1));
}

std::vector<std::string> CacheDir::list() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> names;
    const auto index = read_index(root_);
    for (const auto& [name, digest] : index.items()) names.push_back(name);
    return names;
}

std::vector<CacheEntryStatus> CacheDir::verify() const {
    std::lock_guard lock(mutex_);
    std::vector<CacheEntryStatus> report;
    const auto index = read_index(root_);
    for (const auto& [name, digest] : index.items()) {
        CacheEntryStatus status{name, false, {}};
        const fs::path path = root_ / name;
        if (!fs::exists(path)) {
            status.detail = "missing";
        } else if (sha256_file(path) != digest.get<std::string>()) {
            status.detail = "digest mismatch";
        } else {
            status.ok = true;
        }
        report.push_back(std::move(status));
    }
    return report;
}

std::size_t CacheDir::purge() {
    std::lock_guard lock(mutex_);
    std::size_t removed = 0;
    const auto index = read_index(root_);
    for (const auto& [name, digest] : index.items()) {
        if (fs::remove(root_ / name)) ++removed;
    }
    fs::remove(root_ / kIndexName);
    return removed;
}

} // namespace tfim
