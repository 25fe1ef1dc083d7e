#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "tryon/tensor.hpp"

int main(int argc, char** argv) {
    tryon::set_blas_threads(1);
    return doctest::Context(argc, argv).run();
}
