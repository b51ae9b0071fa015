#pragma once

#include <stdexcept>
#include <string>

namespace geomat {

// Unreadable or malformed inputs: files, configs, argument values.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// A well-formed file whose structure does not match the expected schema.
class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// One failed transport attempt; the query layer retries these.
class BackendTransportError : public std::runtime_error {
public:
    explicit BackendTransportError(const std::string& what) : std::runtime_error(what) {}
};

// Retries exhausted; carries the last transport cause.
class BackendError : public std::runtime_error {
public:
    explicit BackendError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace geomat
