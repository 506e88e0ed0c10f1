#pragma once

#include <stdexcept>
#include <string>

namespace cpnav {

// Shape or extent disagreement between tensors / layers.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf encountered where finite values are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operation invoked in a state that does not permit it.
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Argument outside its valid domain (labels, class counts, empty splits).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Malformed or corrupted on-disk data.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cpnav
