#include <iostream>

#include "sauvolanet/cli.hpp"

int main(int argc, char** argv)
{
	return sauvolanet::run_cli(argc, argv, std::cout, std::cerr);
}
