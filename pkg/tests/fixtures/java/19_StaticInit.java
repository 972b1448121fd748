package st;

class StaticInit {
  static {
    // static init comment
  }
  {
    /* instance init */
  }
}
