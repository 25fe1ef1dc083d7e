#include "tryon/tensor.hpp"

#include <cblas.h>

#include "tryon/rng.hpp"

namespace tryon {

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          float alpha, const float* a, int64_t lda, const float* b, int64_t ldb,
          float beta, float* c, int64_t ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, int(m), int(n), int(k),
                alpha, a, int(lda), b, int(ldb), beta, c, int(ldc));
}

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          double alpha, const double* a, int64_t lda, const double* b, int64_t ldb,
          double beta, double* c, int64_t ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, int(m), int(n), int(k),
                alpha, a, int(lda), b, int(ldb), beta, c, int(ldc));
}

void set_blas_threads(int n) { openblas_set_num_threads(n); }

std::string Rng::state_hex() const {
    static const char* hexd = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (uint64_t w : s_)
        for (int i = 15; i >= 0; i--) out.push_back(hexd[(w >> (4 * i)) & 0xf]);
    return out;
}

Rng Rng::from_state_hex(const std::string& hex) {
    if (hex.size() != 64) fail(ErrorKind::Format, "rng state must be 64 hex chars");
    std::array<uint64_t, 4> s{};
    for (int w = 0; w < 4; w++) {
        uint64_t v = 0;
        for (int i = 0; i < 16; i++) {
            char c = hex[size_t(16 * w + i)];
            uint64_t d;
            if (c >= '0' && c <= '9') d = uint64_t(c - '0');
            else if (c >= 'a' && c <= 'f') d = uint64_t(c - 'a') + 10;
            else fail(ErrorKind::Format, "bad hex digit in rng state");
            v = (v << 4) | d;
        }
        s[size_t(w)] = v;
    }
    Rng r;
    r.set_state(s);
    return r;
}

uint64_t derive_seed(uint64_t base, const std::string& tag) {
    uint64_t h = 0xcbf29ce484222325ull ^ base;
    for (char c : tag) {
        h ^= uint64_t(uint8_t(c));
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b, uint64_t c) {
    uint64_t h = 0xcbf29ce484222325ull ^ base;
    for (uint64_t w : {a, b, c})
        for (int i = 0; i < 8; i++) {
            h ^= (w >> (8 * i)) & 0xff;
            h *= 0x100000001b3ull;
        }
    return h;
}

}  // namespace tryon
