#pragma once

#include "bbox/error.hpp"

#include <doctest.h>

#include <functional>

namespace bbox::testing {

// Code of the Error raised by `fn`; fails the test when nothing is thrown.
inline Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::Io;
}

} // namespace bbox::testing
