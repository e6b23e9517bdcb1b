#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>

namespace varlex {

/// Malformed or inconsistent input data (bad CSV, label coverage, shape mismatch).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite values or a failed factorization inside a numerical routine.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using WarningSink = std::function<void(const std::string &)>;

inline WarningSink &warning_sink() {
    static WarningSink sink = [](const std::string &msg) {
        std::cerr << "varlex: warning: " << msg << '\n';
    };
    return sink;
}

inline void warn(const std::string &msg) {
    if (auto &sink = warning_sink())
        sink(msg);
}

} // namespace varlex
