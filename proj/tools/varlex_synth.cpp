// varlex-synth: writes a synthetic expression matrix and its labels.

#include <varlex/synthetic.hpp>
#include <varlex/version.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

int main(int argc, char **argv) {
    varlex::SyntheticSpec spec;
    std::string matrix = "matrix.csv", labels = "labels.csv";
    bool label_row = false;

    CLI::App app{"Synthetic low-rank background plus sparse class signatures"};
    app.add_option("--genes", spec.genes);
    app.add_option("--samples", spec.samples);
    app.add_option("--classes", spec.classes);
    app.add_option("--background-rank", spec.background_rank);
    app.add_option("--background-scale", spec.background_scale);
    app.add_option("--signature-genes", spec.signature_genes, "genes per class signature");
    app.add_option("--signature-rate", spec.signature_rate, "chance a sample expresses a signature gene");
    app.add_option("--signature-low", spec.signature_low);
    app.add_option("--signature-high", spec.signature_high);
    app.add_option("--spike-rate", spec.spike_rate);
    app.add_option("--spike-magnitude", spec.spike_magnitude);
    app.add_option("--noise-sd", spec.noise_sd);
    app.add_option("--seed", spec.seed);
    app.add_option("--matrix", matrix, "matrix CSV path");
    app.add_option("--labels", labels, "labels CSV path (ignored with --label-row)");
    app.add_flag("--label-row", label_row, "append a LABEL row instead of writing a labels file");
    CLI11_PARSE(app, argc, argv);

    try {
        auto data = varlex::make_synthetic(spec);
        const std::string header = std::string("varlex ") + varlex::version_string +
                                   " seed=" + std::to_string(spec.seed);
        varlex::write_expression_csv(data.dataset, matrix, {header}, label_row);
        if (!label_row)
            varlex::write_labels_csv(data.dataset, labels);
    } catch (const std::exception &e) {
        std::cerr << "varlex-synth: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
