#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fedka {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor or layer dimensions disagree. `layer` is -1 when the mismatch is at the network input.
class ShapeError : public Error {
public:
    ShapeError(int layer, const std::string& what)
        : Error(layer < 0 ? "input: " + what : "layer " + std::to_string(layer) + ": " + what),
          layer_(layer) {}
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

class NumericError : public Error {
public:
    NumericError(int layer, const std::string& what)
        : Error(layer < 0 ? what : "layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

// Malformed input files. `offset` is the byte position where parsing stopped.
class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t offset, const std::string& what)
        : Error(file + " @ byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Collects every violation found while validating a config.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (const auto& s : v) {
            if (!out.empty()) out += "\n";
            out += s;
        }
        return out;
    }
    std::vector<std::string> violations_;
};

}  // namespace fedka
