/** Doc without package. */
public class NoPackage {
  // inline
  void run() {}
}
