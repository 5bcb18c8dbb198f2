from phonon_walk.cli import main

raise SystemExit(main())
