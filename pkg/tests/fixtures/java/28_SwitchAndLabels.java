package sw;

class Switch {
  int f(int x) {
    switch (x) {
      case 1: // one
        return 1;
      default:
        /* other */
        return 0;
    }
  }
}
