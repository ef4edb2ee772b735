"""
Nonstaggered Lagrangian-Eulerian solver for 1D conservation laws (command line)

Commands
--------
  run      python main.py run --model burgers_p1 --cells 512 --tfinal 0.15
  sweep    python main.py sweep --model burgers_p1 --cells-list 128,256,512,1024,2048
  monitor  python main.py monitor --model burgers_p2 --k-mode auto
  table1   python main.py table1 --which kk [--run]
  presets  python main.py presets

Models
------
  burgers_p1       three states, two shocks merging at t = 1/4
  burgers_p2       transonic rarefaction through the sonic point
  burgers_sine     periodic sine data
  lwr_backward     nonlocal traffic, kernel looking behind the driver
  lwr_forward      nonlocal traffic, kernel looking ahead
  keyfitz_kranzer  nonstrictly hyperbolic 2x2 system
  custom           periodic linear advection (--config speed/profile)

Schemes
-------
  nsle (default), godunov, rusanov, lax_friedrichs

Dependencies
------------
    pip install -r requirements.txt
"""

import sys

from expcli import main

if __name__ == "__main__":
    sys.exit(main())
