#include "kitamp/app.hpp"

int main(int argc, char** argv) { return kitamp::app::run(argc, argv); }
