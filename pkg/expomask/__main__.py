from expomask.cli import main

main()
