#ifndef TRYON_UTIL_HPP
#define TRYON_UTIL_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tryon {

enum class ErrorKind {
    InvalidArgument,
    Shape,
    Numeric,
    Format,
    Version,
    Compatibility,
    Integrity,
    Vocabulary,
    Parse,
    Grading,
    DetectionFailure,
    EmptySegmentation,
    Io,
    Config,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

const char* error_kind_name(ErrorKind kind);

// Incremental SHA-256, used for config hashes and dataset/checkpoint content
// hashes. Self-contained so hashing never depends on an external crypto lib.
class Sha256 {
public:
    Sha256();
    void update(const void* data, size_t len);
    void update(const std::string& s) { update(s.data(), s.size()); }
    // Finalizes and returns lowercase hex. The object must not be reused.
    std::string hex_digest();

private:
    void process_block(const uint8_t* block);
    uint32_t state_[8];
    uint64_t total_len_ = 0;
    uint8_t buffer_[64];
    size_t buffer_len_ = 0;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::vector<uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, const void* data, size_t len);

std::string base64_encode(const std::vector<uint8_t>& data);

}  // namespace tryon

#endif
