#pragma once

#include <stdexcept>
#include <string>

namespace medseg {

// Invalid arguments to an operation (bad counts, shape mismatches, out-of-range values).
class ArgumentError : public std::invalid_argument {
public:
    explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Unparseable external input (manifest, config, checkpoint header).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Parsed input violates a dataset/file invariant (names the offending file where known).
class IntegrityError : public std::runtime_error {
public:
    explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Weight transfer between incompatible networks.
class TransferError : public std::runtime_error {
public:
    explicit TransferError(const std::string& msg) : std::runtime_error(msg) {}
};

// External checkpoint could not be imported (name-set mismatch, truncation).
class ImportError : public std::runtime_error {
public:
    explicit ImportError(const std::string& msg) : std::runtime_error(msg) {}
};

// Stored checkpoint bytes do not match their digest.
class CorruptionError : public std::runtime_error {
public:
    explicit CorruptionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or missing experiment configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric guard tripped (zero-norm rows, non-finite loss).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// A cross-module contract was violated (e.g. EMA name-set mismatch).
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace medseg
