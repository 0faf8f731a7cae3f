#pragma once

#include <iosfwd>
#include <string>

#include "langadv/corpus.hpp"
#include "langadv/encoder.hpp"
#include "langadv/trainer.hpp"

namespace langadv {

// One config file drives generation, training, evaluation, and alignment.
// Plain key=value lines grouped into [corpus], [encoder], [trainer], and
// [experiment] sections; '#' starts a comment. Seeds are centralized: the
// experiment seed feeds corpus generation, and run r trains with seed
// experiment.seed + r. The encoder vocab size always comes from the generated
// vocabulary, so neither is a config key.
struct ExperimentConfig {
    CorpusSpec corpus;
    EncoderConfig encoder;
    TrainerConfig trainer;
    int runs = 4;
    std::string output_dir = "out";
    std::uint64_t seed = 1;
    std::string task = "classification";  // or "ner"

    void validate() const;
};

ExperimentConfig parse_config(std::istream& in, const std::string& source_name = "config");
ExperimentConfig load_config(const std::string& path);

}  // namespace langadv
