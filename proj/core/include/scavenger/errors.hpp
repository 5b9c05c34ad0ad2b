#pragma once

#include <stdexcept>
#include <string>

namespace scavenger {

// Base for everything the protocol layer throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A file system operation failed; the message carries the path.
class IoError : public Error {
public:
    using Error::Error;
};

// best.dat is missing: the job was never initialized (or was wiped mid-run).
class NotInitializedError : public Error {
public:
    using Error::Error;
};

// initialize() called on a job that already has a best.dat.
class AlreadyInitializedError : public Error {
public:
    using Error::Error;
};

// A protocol file could not be parsed or failed its checksum.
class FormatError : public Error {
public:
    using Error::Error;
};

// The job lock stayed busy past the acquisition deadline.
class ContentionError : public Error {
public:
    using Error::Error;
};

// Caller broke a precondition (bad index, mismatched lengths, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

} // namespace scavenger
