package ce;

class CharEdge {
  char slash = '/';
  char star = '*';
  char bs = '\\';
  char q = '\'';
  String s = "" + '/' + '*' + "*/";
  // final
}
