#include <iostream>

#include "agfuse/parallel.hpp"
#include "cli.hpp"

int main(int argc, char** argv) {
    using namespace agfuse;
    CLI::App app{"agfuse: fuse UAS and satellite imagery, train SRCNN models, evaluate and run downstream regression"};
    app.require_subcommand(1, 1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = logical cores)");

    cli::Action action;
    cli::add_data_commands(app, action);
    cli::add_model_commands(app, action);
    cli::add_pipeline_command(app, action);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    set_thread_count(threads);
    try {
        action();
        return 0;
    } catch (const Error& e) {
        cli::log_event("error", {{"kind", to_string(e.kind())}, {"message", e.what()}});
        return cli::exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        cli::log_event("error", {{"kind", "io"}, {"message", e.what()}});
        return 2;
    } catch (const std::exception& e) {
        cli::log_event("error", {{"kind", "internal"}, {"message", e.what()}});
        return 1;
    }
}
