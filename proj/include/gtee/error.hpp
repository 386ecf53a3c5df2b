#pragma once

#include <stdexcept>
#include <string>

namespace gtee {

// Violated precondition of an operation (empty batch, non-scalar backward, ...).
class ContractError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

// Tensor shape mismatch. The message names the offending op.
class DimensionError : public ContractError {
   public:
    using ContractError::ContractError;
};

// Malformed or inconsistent input data (files, records, spans).
class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class OntologyError : public DataError {
   public:
    OntologyError(const std::string& type_id, const std::string& what)
        : DataError(type_id.empty() ? what : type_id + ": " + what), type_id_(type_id) {}

    const std::string& type_id() const noexcept { return type_id_; }

   private:
    std::string type_id_;
};

}  // namespace gtee
