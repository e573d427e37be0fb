#pragma once

#include <stdexcept>
#include <string>

namespace isgcd {

// File could not be read or a row failed to parse.
class parse_error : public std::runtime_error {
public:
    explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input parsed but violates a domain invariant (score range, duplicates, ...).
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Failure raised while optimizing (NaN loss, bad gradients, ...).
class training_error : public std::runtime_error {
public:
    explicit training_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint file rejected (bad magic, version, dims, truncation).
class checkpoint_error : public std::runtime_error {
public:
    explicit checkpoint_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace isgcd
