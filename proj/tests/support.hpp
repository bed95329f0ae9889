#pragma once

#include "steercal/contrast.hpp"
#include "steercal/model.hpp"
#include "steercal/rng.hpp"

#include <filesystem>
#include <string>

namespace steercal::test {

// Small random-weight model over a minimal vocabulary.
ToyModel small_model(std::uint64_t seed = 7, int layers = 4, int dim = 16, int heads = 2, int vocab = 40);

Vector random_vector(Rng & rng, std::size_t n, double scale = 1.0);

TokenSequence random_sequence(Rng & rng, const ModelConfig & config, std::size_t length);

// Representation set with the given rows; the first n_pos rows are positive.
RepresentationSet make_reps(const Matrix & rows, std::size_t n_pos);

// Fresh empty directory under the system temp dir, removed by the destructor.
class TempDir {
public:
    explicit TempDir(const std::string & tag);
    ~TempDir();
    TempDir(const TempDir &) = delete;
    TempDir & operator=(const TempDir &) = delete;
    const std::filesystem::path & path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Runs a shell command, returning its exit status and capturing stdout.
int run_command(const std::string & command, std::string * output = nullptr);

} // namespace steercal::test
