from affdim.cli import main

raise SystemExit(main())
