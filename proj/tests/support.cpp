#include "support.hpp"

#include <array>
#include <cstdio>
#include <sys/wait.h>
#include <unistd.h>

namespace steercal::test {

ToyModel small_model(std::uint64_t seed, int layers, int dim, int heads, int vocab) {
    ModelConfig c;
    c.num_layers = layers;
    c.hidden_dim = dim;
    c.num_heads = heads;
    c.vocab_size = vocab;
    c.max_seq_len = 256;
    c.seed = seed;
    return ToyModel(c, Vocabulary::minimal(static_cast<std::size_t>(vocab)));
}

Vector random_vector(Rng & rng, std::size_t n, double scale) {
    Vector v(n);
    for (auto & x : v) {
        x = scale * rng.normal();
    }
    return v;
}

TokenSequence random_sequence(Rng & rng, const ModelConfig & config, std::size_t length) {
    TokenSequence seq;
    for (std::size_t i = 0; i < length; ++i) {
        seq.tokens.push_back(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(config.vocab_size))));
    }
    return seq;
}

RepresentationSet make_reps(const Matrix & rows, std::size_t n_pos) {
    RepresentationSet reps;
    reps.item_id = 1;
    reps.layer = 2;
    reps.vectors = rows;
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        reps.polarities.push_back(i < n_pos ? Polarity::positive : Polarity::negative);
        reps.gold_labels.push_back(1);
    }
    return reps;
}

TempDir::TempDir(const std::string & tag) {
    std::string pattern = (std::filesystem::temp_directory_path() / ("steercal-" + tag + "-XXXXXX")).string();
    if (::mkdtemp(pattern.data()) == nullptr) {
        throw std::runtime_error("mkdtemp failed");
    }
    path_ = pattern;
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

int run_command(const std::string & command, std::string * output) {
    FILE * pipe = ::popen(command.c_str(), "r");
    if (pipe == nullptr) {
        return -1;
    }
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        if (output != nullptr) {
            output->append(buf.data(), n);
        }
    }
    const int status = ::pclose(pipe);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace steercal::test
