#include "semloc/errors.h"

namespace semloc {

ParseError::ParseError(const std::string& file, int line, const std::string& what)
    : Error(file + ":" + std::to_string(line) + ": " + what) {}

ParseError::ParseError(const std::string& file, const std::string& what)
    : Error(file + ": " + what) {}

}  // namespace semloc
