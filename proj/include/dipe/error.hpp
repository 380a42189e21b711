#pragma once

#include <stdexcept>
#include <string>

namespace dipe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Array lengths or shapes do not agree with each other or with the config.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A one-sided spectrum whose DC or Nyquist bin is not real.
class SymmetryError : public Error {
public:
    using Error::Error;
};

/// A scalar hyperparameter is outside its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// The requested operation does not exist for this configuration (e.g. a
/// router query on a single-expert model).
class UnsupportedConfigError : public Error {
public:
    using Error::Error;
};

/// Input data is unusable: empty splits, constant channels, non-finite values.
class DataError : public Error {
public:
    using Error::Error;
};

/// CSV ingestion failure. Messages name the offending row and column.
class IngestionError : public DataError {
public:
    using DataError::DataError;
};

/// A non-finite value appeared during computation.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace dipe
