// Generate a small corpus, train GADFormer on it, score the test split and
// print the most anomalous block per group.

#include <filesystem>
#include <iostream>

#include "gadtraj/gadtraj.hpp"

using namespace gadtraj;

int main() {
    RunConfig cfg = preset("desk");
    cfg.seed = 7;
    const auto corpus = load_corpus(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "gadtraj_quickstart";
    const auto run = run_model<GadFormer>(corpus, cfg, dir);
    std::cout << "test AUROC " << run.test.roc.value_or(0.0) << ", AUPRC " << run.test.auprc.value_or(0.0) << '\n';

    const auto model = model_from_checkpoint<GadFormer>(load_checkpoint(dir / "checkpoint.json"));
    const auto groups = pad_dataset(apply_scaler(corpus, run.scaler), model.config().seq_len);
    const auto bas = compute_bas(collect_attention(model, groups), cfg.bas);
    for (std::size_t b = 0; b < bas.block_means.size(); ++b)
        std::cout << "block " << b << ": mean BAS " << bas.block_means[b] << ", top group "
                  << bas.group_ids[bas.top_n[b].front()] << '\n';
}
