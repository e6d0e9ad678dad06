# Commands package - CLI subcommands
