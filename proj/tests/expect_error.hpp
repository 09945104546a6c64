#ifndef TARPRO_TESTS_EXPECT_ERROR_HPP
#define TARPRO_TESTS_EXPECT_ERROR_HPP

#include <gtest/gtest.h>

#include "tarpro/core_types.hpp"

namespace tarpro::testing {

/// Kind of the Error thrown by f; a test failure if nothing is thrown.
template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::InvalidArgument;
}

}  // namespace tarpro::testing

#endif  // TARPRO_TESTS_EXPECT_ERROR_HPP
