#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dmd/answer.hpp"
#include "dmd/core.hpp"
#include "dmd/datastore.hpp"
#include "dmd/features.hpp"
#include "dmd/llm.hpp"
#include "dmd/prompt.hpp"

namespace dmd {

inline constexpr std::size_t kDefaultK = 8;

struct NeighborSet {
    std::vector<Neighbor> neighbors;
    std::size_t k_requested = kDefaultK;
};

/// Encodes every sample of `ds` and builds a store from the resulting keys.
/// Encoder spec and weight fingerprint land in the metadata.
inline Datastore build_store_from_dataset(const Dataset& ds, const EmbeddingProvider& encoder,
                                          const HeadWeights& weights,
                                          std::map<std::string, std::string> metadata = {}) {
    std::vector<std::pair<TheoryVector, Sample>> pairs;
    pairs.reserve(ds.samples.size());
    for (const auto& s : ds.samples) pairs.emplace_back(theory_vector_for(s, encoder, weights), s);
    metadata["encoder"] = encoder.spec();
    metadata["weights"] = weights_fingerprint(weights);
    metadata["activation"] = std::string(to_string(weights.activation));
    metadata["dataset"] = ds.name;
    return build_datastore(pairs, std::move(metadata));
}

inline NeighborSet retrieve_neighbors(const Datastore& store, const Sample& sample,
                                      const EmbeddingProvider& encoder, const HeadWeights& weights,
                                      std::size_t k = kDefaultK) {
    if (k == 0) throw PreconditionError("k must be >= 1");
    if (store.empty()) return {{}, k};
    const auto tv = theory_vector_for(sample, encoder, weights);
    return {query_knn(store, tv.h_t, k), k};
}

/// "Example i:" blocks, nearest first, each with the gold label.
inline std::string render_examples_block(const NeighborSet& set) {
    if (set.neighbors.empty()) return std::string(kNoExamplesNotice);
    std::string out;
    for (std::size_t i = 0; i < set.neighbors.size(); ++i) {
        const auto& s = set.neighbors[i].sample;
        if (i) out += "\n\n";
        out += "Example " + std::to_string(i + 1) + ":\n";
        out += "Sentence: " + s.sentence() + "\n";
        out += "Target word: " + s.target_word() + "\n";
        out += "Label: ";
        out += s.label() ? to_string(*s.label()) : std::string_view("unknown");
    }
    return out;
}

inline std::vector<ChatMessage> render_implicit_prompt(const PromptTemplate& ins_im, const NeighborSet& neighbors,
                                                       const Sample& sample) {
    return render_prompt(ins_im,
                         {{"examples", render_examples_block(neighbors)},
                          {"sentence", sample.sentence()},
                          {"target_word", sample.target_word()}},
                         {"examples", "sentence", "target_word"});
}

/// Retrieves k neighbors, renders the prompt and makes one model call.
inline GuidedResponse run_implicit(Gateway& gateway, const LlmConfig& config, const Datastore& store,
                                   const Sample& sample, const EmbeddingProvider& encoder,
                                   const HeadWeights& weights, std::size_t k, const PromptTemplate& ins_im,
                                   CallContext ctx = {}) {
    const auto neighbors = retrieve_neighbors(store, sample, encoder, weights, k);
    const auto msgs = render_implicit_prompt(ins_im, neighbors, sample);
    if (ctx.sample_id.empty()) ctx.sample_id = sample.id();
    ctx.stage = Stage::Implicit;
    GuidedResponse r;
    r.stage = Stage::Implicit;
    r.prompt_digest = prompt_digest(msgs);
    r.explanation = gateway.complete(config, msgs, ctx);
    r.answer = extract_answer(r.explanation);
    return r;
}

}  // namespace dmd
