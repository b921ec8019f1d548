#pragma once

#include <stdexcept>
#include <string>

namespace kcp {

// Base class for everything this library throws on purpose. Pipeline stages
// catch Error per record and quarantine instead of aborting the run.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated a documented precondition (empty prompt, k == 0, ...).
struct PreconditionError : Error {
    using Error::Error;
};

// Corpus file could not be turned into a snapshot at all.
struct IngestError : Error {
    using Error::Error;
};

// Loaded artifact does not match its schema or its recorded hashes.
struct ValidationError : Error {
    using Error::Error;
};

// Transient transport failure from a backend; the gateway retries these.
struct TransportError : Error {
    using Error::Error;
};

// Backend failed after retries, or refused the request outright.
struct GatewayError : Error {
    using Error::Error;
};

// Backend lacks a capability the caller asked for (scoring, embeddings).
struct CapabilityError : Error {
    using Error::Error;
};

// A selection step could not find enough candidates (distractors, hard docs).
struct InsufficientCandidatesError : Error {
    using Error::Error;
};

// All generation attempts for one record were rejected by a validator.
struct GenerationRejectedError : Error {
    using Error::Error;
};

// Requested class balance cannot be realized with the available counts.
struct RatioUnreachableError : Error {
    using Error::Error;
};

}  // namespace kcp
